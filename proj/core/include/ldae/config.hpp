#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ldae/networks.hpp"
#include "ldae/phantom.hpp"

namespace ldae::config {

// Flat key=value configuration. The `profile` key applies a preset (fast16 or
// full32) before the remaining keys; command-line overrides come last.
struct PipelineConfig {
    std::string profile = "fast16";
    std::uint64_t seed = 1234;
    std::string data_dir = "out/data";
    std::string out_dir = "out";

    // cohort
    int dims = 16;
    int n_subjects = 48;
    double disease_fraction = 0.5;
    double disease_threshold = 0.002;
    double texture_amplitude = 0.03;
    int min_sessions = 3, max_sessions = 6;
    double train_fraction = 0.90;
    double val_fraction = 0.01;

    // schedule
    int T = 1000;
    double beta_start = 1e-4, beta_end = 2e-2;
    double gamma = 0.1;

    // compression stage
    int f = 4;
    int c_lat = 2;
    std::vector<int> comp_channels = {8, 16, 32};
    int ae_epochs = 60;
    int ae_batch = 8;
    double ae_lr = 1e-3;
    double kl_weight = 1e-6;

    // latent diffusion stage
    std::vector<int> unet_channels = {32, 64};
    int t_dim = 64;
    int heads = 4;
    int groups = 8;
    int ldm_epochs = 60;
    int ldm_batch = 16;
    double ldm_lr = 1e-3;
    double ema_decay = 0.999;

    // representation stage
    int d_sem = 64;
    std::vector<int> tower_channels = {8, 16, 32};
    int ldae_epochs = 60;
    int ldae_batch = 16;
    double ldae_lr = 1e-3;
    int val_substeps = 20;

    // voxel-space baseline
    std::vector<int> voxel_channels = {16, 32};
    int voxel_ldm_epochs = 2;
    int voxel_ldae_epochs = 2;

    // evaluation
    int steps = 50;
    int invert_steps = 0;  // 0 means the full T grid
    int table_steps = 100;
    int bench_subjects = 30;
    int bench_reps = 10;

    phantom::CohortConfig cohort_config() const;
    nets::NetworkSpec unet_spec() const;
    nets::NetworkSpec semantic_spec() const;
    nets::NetworkSpec compressor_spec() const;
    nets::NetworkSpec voxel_unet_spec() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_config_text(const std::string& text);
KeyValues read_config_file(const std::string& path);

// Applies profile first, then the remaining pairs in order. Unknown keys throw.
PipelineConfig make_config(const KeyValues& file_pairs, const KeyValues& overrides);

std::string canonical_text(const PipelineConfig& cfg);
std::uint64_t config_hash(const PipelineConfig& cfg);
void write_effective_config(const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace ldae::config
