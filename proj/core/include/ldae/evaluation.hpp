#pragma once

#include <map>
#include <string>
#include <vector>

#include "ldae/latentops.hpp"
#include "ldae/metrics.hpp"
#include "ldae/phantom.hpp"
#include "ldae/probes.hpp"

namespace ldae::evaluation {

struct TripletTask {
    std::string subject_id;
    int start_months = 0, target_months = 0, end_months = 0;
    double alpha = 0.0;      // (target - start) / (end - start)
    int prediction_gap = 0;  // min(target - start, end - target)
    int time_gap = 0;        // end - start
    int start_row = -1, target_row = -1, end_row = -1;  // manifest row indices
};

// All (start, target, end) session triples with strict temporal betweenness,
// over rows of one split, capped at max_subjects in manifest order.
std::vector<TripletTask> enumerate_triplets(const std::vector<phantom::ManifestRow>& rows,
                                            const std::string& split, int max_subjects);

struct TripletOutcome {
    TripletTask task;
    double ssim = 0.0, mse_v = 0.0;
    double baseline_ssim = 0.0, baseline_mse = 0.0;  // copy-nearest-endpoint reconstruction
};

struct InterpolationSummary {
    std::vector<TripletOutcome> outcomes;
    // bins over prediction gap: <=6, 7-12, 13-18, >18 months
    std::array<double, 4> bin_mean_ssim{}, bin_std_ssim{}, bin_mean_mse{}, bin_std_mse{};
    std::array<int, 4> bin_count{};
};

int prediction_gap_bin(int months);

// For each task: interpolate the dual codes at alpha, decode, and compare to
// the compression reconstruction of the true target session. Inversions are
// cached per session row.
InterpolationSummary run_interpolation_benchmark(const latentops::Models& m,
                                                 const std::vector<phantom::ManifestRow>& rows,
                                                 const std::string& data_dir,
                                                 const std::vector<TripletTask>& tasks, int n_steps,
                                                 int invert_steps);

void write_interpolation_csv(const std::string& path, const InterpolationSummary& summary,
                             std::uint64_t config_hash, std::uint64_t seed);

}  // namespace ldae::evaluation
