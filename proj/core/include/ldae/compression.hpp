#pragma once

#include <memory>
#include <string>

#include "ldae/networks.hpp"
#include "ldae/optim.hpp"
#include "ldae/volume.hpp"

namespace ldae::compression {

// Single global scale applied after encoding so latents have unit variance
// over the first training batch.
struct LatentScaler {
    double scale = 1.0;
};

// mean over elements of -0.5 * (1 + logvar - mean^2 - exp(logvar))
double kl_penalty(const Tensor& mean, const Tensor& logvar);

struct CompressionTrainConfig {
    double kl_weight = 1e-6;
    double lr = 1e-3;
    int epochs = 60;
    int batch = 8;
    std::uint64_t seed = 0;
    int scaler_batch = 32;  // "first batch" size for the latent scaler
};

struct AeState {
    std::unique_ptr<nets::CompressionAE> net;
    nets::Adam adam{1e-3};
    std::vector<Tensor> best_values;  // best-validation weights
    double best_val_ssim = 0.0;
    int best_epoch = -1;
    int epochs_done = 0;
    double final_loss = 0.0;
};

AeState make_ae_state(const nets::NetworkSpec& spec, const CompressionTrainConfig& cfg);

// L2 + KL with reparameterized sampling; tracks the best validation SSIM.
void run_ae_training(AeState& state, const std::vector<Volume>& train,
                     const std::vector<Volume>& val, const CompressionTrainConfig& cfg,
                     const std::string& log_path, std::uint64_t config_hash);

// Restores the best weights and fits the scaler on the first training
// volumes in manifest order.
LatentScaler finish_autoencoder(AeState& state, const std::vector<Volume>& train,
                                int scaler_batch);

// Scaled posterior mean; deterministic.
Tensor encode(nets::CompressionAE& net, const LatentScaler& scaler, const Volume& x);

// Unscale, decode, clamp to [0,1].
Volume decode(nets::CompressionAE& net, const LatentScaler& scaler, const Tensor& z);

}  // namespace ldae::compression
