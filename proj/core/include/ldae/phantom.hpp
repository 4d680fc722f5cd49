#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ldae/volume.hpp"

namespace ldae::phantom {

// Parametric description of one synthetic "brain" volume: an outer ellipsoid
// shell (skull), a bright cortex band whose thickness acts as the age proxy,
// a dark central ventricle whose radius acts as the disease proxy, and seeded
// band-limited texture. All radii/thicknesses are fractions of the half
// extent in normalized [-1,1] coordinates.
struct PhantomParams {
    std::array<double, 3> outer_radii{0.9, 0.9, 0.9};  // in (0,1]
    double shell_thickness = 0.15;                     // in (0.02,0.3)
    double ventricle_radius = 0.2;                     // in (0.05,0.6)
    std::uint64_t texture_seed = 0;
    double texture_amplitude = 0.0;  // in [0,0.1]

    void validate() const;
};

struct Session {
    int months = 0;
    std::string session_id;
    std::string volume_path;  // relative to the manifest directory
};

struct SubjectRecord {
    std::string subject_id;
    PhantomParams baseline_params;
    double progression_rate = 0.0;  // ventricle growth per month, >= 0
    std::vector<Session> sessions;  // months strictly increasing, first is 0
    int disease_label = 0;          // 1 iff progression_rate > threshold
    double age_proxy = 0.0;         // shell_thickness
    std::string split;              // train | val | test
};

struct CohortConfig {
    std::array<int, 3> dims{16, 16, 16};
    double disease_fraction = 0.5;
    double disease_threshold = 0.002;
    double outer_radius_lo = 0.80, outer_radius_hi = 0.95;
    double shell_lo = 0.06, shell_hi = 0.24;
    double vent_healthy_lo = 0.12, vent_healthy_hi = 0.20;
    double vent_diseased_lo = 0.26, vent_diseased_hi = 0.34;
    double rate_healthy_lo = 0.0, rate_healthy_hi = 0.001;
    double rate_diseased_lo = 0.004, rate_diseased_hi = 0.008;
    double ventricle_max = 0.42;
    double texture_amplitude = 0.03;
    int min_sessions = 3, max_sessions = 6;
    double train_fraction = 0.90;
    double val_fraction_of_train = 0.01;  // floored at one subject
};

// Region intensities; texture rides on top inside the head.
constexpr double kBackground = 0.0;
constexpr double kSkull = 0.9;
constexpr double kCortex = 0.7;
constexpr double kInterior = 0.4;
constexpr double kVentricle = 0.05;
constexpr double kSkullThickness = 0.06;

// Deterministic for fixed (params, dims). Throws InvalidParams if the
// ventricle would touch the cortex band.
Volume generate_volume(const PhantomParams& params, const std::array<int, 3>& dims);

// Ventricle radius at a given visit, capped.
double ventricle_at_month(const PhantomParams& baseline, double rate, int months, double cap);

// Count of voxels below 0.2 within the central 50% box; the manipulation
// oracle.
std::int64_t measure_ventricle_volume(const Volume& v);

struct ManifestRow {
    std::string subject_id;
    std::string session_id;
    int months = 0;
    double age_proxy = 0.0;
    double disease_score = 0.0;
    int disease_label = 0;
    std::string split;
    std::string path;
};

// Generates subjects, writes one volume file per session under
// out_dir/volumes/ and a manifest.csv; returns the records.
std::vector<SubjectRecord> generate_cohort(int n_subjects, std::uint64_t seed,
                                           const CohortConfig& config, const std::string& out_dir,
                                           std::uint64_t config_hash = 0);

std::vector<ManifestRow> read_manifest(const std::string& manifest_path);

// Rebuilds subject groupings (ordered by first appearance) from manifest rows.
std::vector<std::vector<int>> group_rows_by_subject(const std::vector<ManifestRow>& rows);

// Checks paths exist, months strictly increase per subject, and the split is
// constant per subject. Throws on violation.
void validate_manifest(const std::string& manifest_path);

}  // namespace ldae::phantom
