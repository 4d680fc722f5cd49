#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "ldae/schedule.hpp"
#include "ldae/tensor.hpp"

namespace ldae::diffusion {

using schedule::NoiseSchedule;

// Behavioral contract of a noise predictor eps(z_t, t). Deterministic for
// fixed weights; output shape equals input shape.
struct EpsilonPredictor {
    virtual ~EpsilonPredictor() = default;
    virtual Tensor predict(const Tensor& z_t, int t) = 0;
};

// Gradient estimator g(z_t, y_sem, t) standing in for the score of
// p(y_sem | z_t); output shape equals input shape.
struct GuidancePredictor {
    virtual ~GuidancePredictor() = default;
    virtual Tensor estimate(const Tensor& z_t, const Tensor& y_sem, int t) = 0;
};

// Convenience adapter over a lambda, handy for oracles in tests.
struct FnPredictor final : EpsilonPredictor {
    std::function<Tensor(const Tensor&, int)> fn;
    explicit FnPredictor(std::function<Tensor(const Tensor&, int)> f) : fn(std::move(f)) {}
    Tensor predict(const Tensor& z_t, int t) override { return fn(z_t, t); }
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor forward_sample(const NoiseSchedule& s, const Tensor& z0, int t, const Tensor& eps);

// mu~_t = sqrt(abar_{t-1}) beta_t / (1-abar_t) * z0
//       + sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t) * z_t
Tensor true_posterior_mean(const NoiseSchedule& s, const Tensor& z0, const Tensor& zt, int t);

// mu_theta = (z_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t)
Tensor predicted_mean(const NoiseSchedule& s, const Tensor& zt, int t, const Tensor& eps_hat);

// mu~_t(zt, z0) - mu_theta(zt, t)
Tensor posterior_mean_gap(const NoiseSchedule& s, const Tensor& z0, const Tensor& zt, int t,
                          EpsilonPredictor& pred);

// Deterministic (sigma = 0) or stochastic DDIM update from t to t_prev < t.
Tensor ddim_step(const NoiseSchedule& s, const Tensor& zt, int t, int t_prev,
                 const Tensor& eps_hat, double sigma, const Tensor* noise = nullptr);

// sigma for stochastic (ancestral-style) stepping from t to t_prev; equals
// the posterior variance beta~_t when t_prev == t-1.
double ancestral_sigma(const NoiseSchedule& s, int t, int t_prev);

// eps_hat = eps - sqrt(1 - abar_t) * g
Tensor guided_epsilon(const NoiseSchedule& s, int t, const Tensor& eps, const Tensor& g);

// mean + beta~_t * g
Tensor guided_mean_shift(const NoiseSchedule& s, int t, const Tensor& mean, const Tensor& g);

// One inversion step from t up to t_next, optionally guided by y_sem.
Tensor ddim_invert_step(const NoiseSchedule& s, const Tensor& zt, int t, int t_next,
                        EpsilonPredictor& pred, GuidancePredictor* guide = nullptr,
                        const Tensor* y_sem = nullptr);

enum class SampleMode { kDeterministic, kAncestral };

struct SampleOptions {
    int n_steps = 50;
    SampleMode mode = SampleMode::kDeterministic;
    std::uint64_t seed = 0;
    const Tensor* y_sem = nullptr;         // required when guide is set
    GuidancePredictor* guide = nullptr;
};

// Draws z_T ~ N(0, I) (seeded) and runs the reverse process over the substep
// sequence down to z_0.
Tensor sample_loop(const NoiseSchedule& s, EpsilonPredictor& pred, const std::vector<int>& shape,
                   const SampleOptions& opt);

// Full inversion x0 -> z_T over `steps` ascending timesteps ending at T.
Tensor invert_loop(const NoiseSchedule& s, const Tensor& z0, int n_steps, EpsilonPredictor& pred,
                   GuidancePredictor* guide = nullptr, const Tensor* y_sem = nullptr);

// Reverse process starting from a given z_T (deterministic only).
Tensor decode_loop(const NoiseSchedule& s, const Tensor& zT, int n_steps, EpsilonPredictor& pred,
                   GuidancePredictor* guide = nullptr, const Tensor* y_sem = nullptr);

}  // namespace ldae::diffusion
