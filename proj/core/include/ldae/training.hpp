#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ldae/diffusion.hpp"
#include "ldae/networks.hpp"
#include "ldae/optim.hpp"
#include "ldae/schedule.hpp"
#include "ldae/volume.hpp"

namespace ldae::training {

using schedule::NoiseSchedule;

struct TrainConfig {
    int epochs = 60;
    int batch = 16;
    double lr = 1e-3;
    double ema_decay = 0.999;
    std::uint64_t seed = 0;
    int val_substeps = 20;  // steps for periodic validation decoding
};

// Unweighted noise-matching objective of the latent pretraining stage.
double ldm_loss(const NoiseSchedule& s, diffusion::EpsilonPredictor& pred, const Tensor& z0, int t,
                const Tensor& eps);

// Residual objective of the representation stage:
//   lambda_t * mean(( eps - eps_pred + coef_t * g )^2),
//   coef_t = sqrt(alpha_t) sqrt(1-abar_t) / beta_t * beta~_t  (Sigma = beta~_t I).
double ldae_residual_loss(const NoiseSchedule& s, int t, const Tensor& eps, const Tensor& eps_pred,
                          const Tensor& g);
double ldae_coef(const NoiseSchedule& s, int t);

// Full operation over the networks; pure evaluation, no gradients.
double ldae_loss(const NoiseSchedule& s, nets::UNet3d& frozen_eps, nets::GradEstimator& g_est,
                 nets::SemanticEncoder& enc, const Volume& x0, const Tensor& z0, int t,
                 const Tensor& eps);

// Mutable training state; checkpoints capture and restore it so interrupted
// runs continue on the same per-epoch noise streams.
struct LdmState {
    std::unique_ptr<nets::UNet3d> net;  // raw weights
    nets::Adam adam{1e-3};
    nets::Ema ema;  // final-epoch EMA weights are the retained predictor
    int epochs_done = 0;
    double final_loss = 0.0;
};

LdmState make_ldm_state(const nets::NetworkSpec& spec, const TrainConfig& cfg);

// Runs epochs [state.epochs_done, cfg.epochs).
void run_ldm_training(LdmState& state, const std::vector<Tensor>& latents, const NoiseSchedule& s,
                      const TrainConfig& cfg, const std::string& log_path,
                      std::uint64_t config_hash);

struct LdaeState {
    std::unique_ptr<nets::SemanticEncoder> enc;
    std::unique_ptr<nets::GradEstimator> g;
    nets::Adam enc_adam{1e-3}, g_adam{1e-3};
    nets::Ema enc_ema, g_ema;
    // best-validation EMA snapshots (the retained weights)
    std::vector<Tensor> best_enc_shadow, best_g_shadow;
    double best_val_ssim = 0.0;
    int best_epoch = -1;
    int epochs_done = 0;
    double final_loss = 0.0;
};

LdaeState make_ldae_state(nets::UNet3d& frozen_eps, const nets::NetworkSpec& semantic_spec,
                          const TrainConfig& cfg);

// Joint encoder + gradient-estimator training against the frozen predictor;
// decode_to_volume maps a z0 estimate to image space for validation SSIM.
void run_ldae_training(LdaeState& state, const std::vector<Volume>& train_vols,
                       const std::vector<Tensor>& train_lats, const std::vector<Volume>& val_vols,
                       const NoiseSchedule& s, nets::UNet3d& frozen_eps, const TrainConfig& cfg,
                       const std::function<Volume(const Tensor&)>& decode_to_volume,
                       const std::string& log_path, std::uint64_t config_hash);

}  // namespace ldae::training
