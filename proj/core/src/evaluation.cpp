#include "ldae/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace ldae::evaluation {

std::vector<TripletTask> enumerate_triplets(const std::vector<phantom::ManifestRow>& rows,
                                            const std::string& split, int max_subjects) {
    auto groups = phantom::group_rows_by_subject(rows);
    std::vector<TripletTask> tasks;
    int used = 0;
    for (const auto& g : groups) {
        if (rows[g[0]].split != split) continue;
        if (max_subjects > 0 && used >= max_subjects) break;
        ++used;
        const int n = static_cast<int>(g.size());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                for (int k = j + 1; k < n; ++k) {
                    TripletTask t;
                    t.subject_id = rows[g[i]].subject_id;
                    t.start_months = rows[g[i]].months;
                    t.target_months = rows[g[j]].months;
                    t.end_months = rows[g[k]].months;
                    t.alpha = static_cast<double>(t.target_months - t.start_months) /
                              static_cast<double>(t.end_months - t.start_months);
                    t.prediction_gap =
                        std::min(t.target_months - t.start_months, t.end_months - t.target_months);
                    t.time_gap = t.end_months - t.start_months;
                    t.start_row = g[i];
                    t.target_row = g[j];
                    t.end_row = g[k];
                    tasks.push_back(std::move(t));
                }
    }
    return tasks;
}

int prediction_gap_bin(int months) {
    if (months <= 6) return 0;
    if (months <= 12) return 1;
    if (months <= 18) return 2;
    return 3;
}

InterpolationSummary run_interpolation_benchmark(const latentops::Models& m,
                                                 const std::vector<phantom::ManifestRow>& rows,
                                                 const std::string& data_dir,
                                                 const std::vector<TripletTask>& tasks, int n_steps,
                                                 int invert_steps) {
    InterpolationSummary out;
    std::map<int, Volume> volume_cache;
    std::map<int, latentops::DualCode> code_cache;
    std::map<int, Volume> recon_cache;  // decode_dual of a row's own codes

    auto volume_of = [&](int row) -> const Volume& {
        auto it = volume_cache.find(row);
        if (it == volume_cache.end())
            it = volume_cache
                     .emplace(row, read_volume_file_single(
                                       (fs::path(data_dir) / rows[row].path).string()))
                     .first;
        return it->second;
    };
    auto code_of = [&](int row) -> const latentops::DualCode& {
        auto it = code_cache.find(row);
        if (it == code_cache.end())
            it = code_cache.emplace(row, latentops::encode_dual(m, volume_of(row), invert_steps))
                     .first;
        return it->second;
    };
    auto recon_of = [&](int row) -> const Volume& {
        auto it = recon_cache.find(row);
        if (it == recon_cache.end())
            it = recon_cache.emplace(row, latentops::decode_dual(m, code_of(row), n_steps)).first;
        return it->second;
    };

    std::array<double, 4> sum_ssim{}, sum_ssim2{}, sum_mse{}, sum_mse2{};
    for (const auto& task : tasks) {
        latentops::DualCode interp =
            latentops::interpolate_codes(code_of(task.start_row), code_of(task.end_row), task.alpha);
        Volume generated = latentops::decode_dual(m, interp, n_steps);
        Volume target_ref = m.decode_image(m.encode_image(volume_of(task.target_row)));

        TripletOutcome o;
        o.task = task;
        o.ssim = ssim3d(generated, target_ref);
        o.mse_v = mse(generated, target_ref);
        int nearest_row = (task.target_months - task.start_months) <=
                                  (task.end_months - task.target_months)
                              ? task.start_row
                              : task.end_row;
        const Volume& nearest = recon_of(nearest_row);
        o.baseline_ssim = ssim3d(nearest, target_ref);
        o.baseline_mse = mse(nearest, target_ref);

        int bin = prediction_gap_bin(task.prediction_gap);
        sum_ssim[bin] += o.ssim;
        sum_ssim2[bin] += o.ssim * o.ssim;
        sum_mse[bin] += o.mse_v;
        sum_mse2[bin] += o.mse_v * o.mse_v;
        out.bin_count[bin] += 1;
        out.outcomes.push_back(std::move(o));
    }
    for (int b = 0; b < 4; ++b) {
        if (out.bin_count[b] == 0) continue;
        double n = out.bin_count[b];
        out.bin_mean_ssim[b] = sum_ssim[b] / n;
        out.bin_mean_mse[b] = sum_mse[b] / n;
        out.bin_std_ssim[b] = std::sqrt(std::max(0.0, sum_ssim2[b] / n - out.bin_mean_ssim[b] * out.bin_mean_ssim[b]));
        out.bin_std_mse[b] = std::sqrt(std::max(0.0, sum_mse2[b] / n - out.bin_mean_mse[b] * out.bin_mean_mse[b]));
    }
    return out;
}

void write_interpolation_csv(const std::string& path, const InterpolationSummary& summary,
                             std::uint64_t config_hash, std::uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "# config_hash=" << to_hex(config_hash) << " seed=" << seed << "\n";
    os << "subject_id,start_months,target_months,end_months,alpha,prediction_gap,time_gap,ssim,mse,"
          "baseline_ssim,baseline_mse\n";
    char buf[256];
    for (const auto& o : summary.outcomes) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.6f,%d,%d,%.9g,%.9g,%.9g,%.9g\n",
                      o.task.subject_id.c_str(), o.task.start_months, o.task.target_months,
                      o.task.end_months, o.task.alpha, o.task.prediction_gap, o.task.time_gap,
                      o.ssim, o.mse_v, o.baseline_ssim, o.baseline_mse);
        os << buf;
    }
    static const char* kBins[4] = {"<=6", "7-12", "13-18", ">18"};
    os << "# bin,pred_gap,count,mean_ssim,std_ssim,mean_mse,std_mse\n";
    for (int b = 0; b < 4; ++b) {
        std::snprintf(buf, sizeof buf, "# bin,%s,%d,%.9g,%.9g,%.9g,%.9g\n", kBins[b],
                      summary.bin_count[b], summary.bin_mean_ssim[b], summary.bin_std_ssim[b],
                      summary.bin_mean_mse[b], summary.bin_std_mse[b]);
        os << buf;
    }
}

}  // namespace ldae::evaluation
