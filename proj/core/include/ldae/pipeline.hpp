#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ldae/checkpoint.hpp"
#include "ldae/compression.hpp"
#include "ldae/config.hpp"
#include "ldae/latentops.hpp"
#include "ldae/phantom.hpp"
#include "ldae/training.hpp"

namespace ldae::pipeline {

struct DataSplits {
    std::vector<phantom::ManifestRow> rows;
    std::vector<int> train_rows, val_rows, test_rows;
};

DataSplits load_splits(const std::string& manifest_path);
Volume load_row_volume(const std::string& data_dir, const phantom::ManifestRow& row);
std::vector<Volume> load_volumes(const std::string& data_dir,
                                 const std::vector<phantom::ManifestRow>& rows,
                                 const std::vector<int>& indices);

std::string checkpoint_path(const config::PipelineConfig& cfg, const std::string& stage);

// ---- stage capture/restore ------------------------------------------------
// Checkpoints hold: cur.* (raw weights at save time), opt.* (Adam moments),
// stage-specific ema./best. tensors, and the bookkeeping scalars in extra.

ckpt::Checkpoint capture_ae(compression::AeState& state, const config::PipelineConfig& cfg,
                            const compression::LatentScaler& scaler);
void restore_ae(const ckpt::Checkpoint& c, compression::AeState& state, double lr);

ckpt::Checkpoint capture_ldm(training::LdmState& state, const config::PipelineConfig& cfg,
                             const nets::NetworkSpec& spec, bool voxel, double scaler,
                             const std::string& parent_hash);
void restore_ldm(const ckpt::Checkpoint& c, training::LdmState& state, double lr);

ckpt::Checkpoint capture_ldae(training::LdaeState& state, const config::PipelineConfig& cfg,
                              bool voxel, double scaler, const std::string& parent_hash);
void restore_ldae(const ckpt::Checkpoint& c, training::LdaeState& state, double lr);

// ---- inference-time loading ------------------------------------------------

struct Runtime {
    schedule::NoiseSchedule sched;
    std::unique_ptr<nets::CompressionAE> ae;  // null in voxel mode
    compression::LatentScaler scaler;
    std::unique_ptr<nets::UNet3d> eps;       // EMA weights
    std::unique_ptr<nets::GradEstimator> g;  // best-validation EMA weights
    std::unique_ptr<nets::SemanticEncoder> enc;

    latentops::Models models();
};

// Loads ae -> ldm -> ldae (or the voxel pair) and verifies the parent hash
// chain. Throws MissingParent when a prerequisite checkpoint is absent or the
// chain is broken.
Runtime load_runtime(const config::PipelineConfig& cfg, bool voxel);

// AE-only loading, for stages that need just the compressor.
struct AeRuntime {
    std::unique_ptr<nets::CompressionAE> ae;
    compression::LatentScaler scaler;
    double best_val_ssim = 0.0;
};
AeRuntime load_ae_runtime(const config::PipelineConfig& cfg);

}  // namespace ldae::pipeline
