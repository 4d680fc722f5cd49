#include "ldae/diffusion.hpp"

#include <cmath>

namespace ldae::diffusion {

Tensor forward_sample(const NoiseSchedule& s, const Tensor& z0, int t, const Tensor& eps) {
    check_same_shape(z0, eps, "forward_sample");
    double ab = s.alpha_bar(t);
    Tensor out = z0;
    out.scale_(std::sqrt(ab));
    out.axpy_(std::sqrt(1.0 - ab), eps);
    return out;
}

Tensor true_posterior_mean(const NoiseSchedule& s, const Tensor& z0, const Tensor& zt, int t) {
    check_same_shape(z0, zt, "true_posterior_mean");
    double ab_prev = s.alpha_bar(t - 1);
    double ab = s.alpha_bar(t);
    double c0 = std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab);
    double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    Tensor out = z0;
    out.scale_(c0);
    out.axpy_(ct, zt);
    return out;
}

Tensor predicted_mean(const NoiseSchedule& s, const Tensor& zt, int t, const Tensor& eps_hat) {
    check_same_shape(zt, eps_hat, "predicted_mean");
    double inv_sqrt_a = 1.0 / std::sqrt(s.alpha(t));
    double c = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    Tensor out = zt;
    out.axpy_(-c, eps_hat);
    out.scale_(inv_sqrt_a);
    return out;
}

Tensor posterior_mean_gap(const NoiseSchedule& s, const Tensor& z0, const Tensor& zt, int t,
                          EpsilonPredictor& pred) {
    Tensor eps_hat = pred.predict(zt, t);
    check_same_shape(zt, eps_hat, "posterior_mean_gap: predictor output");
    Tensor gap = true_posterior_mean(s, z0, zt, t);
    gap.sub_(predicted_mean(s, zt, t, eps_hat));
    return gap;
}

Tensor ddim_step(const NoiseSchedule& s, const Tensor& zt, int t, int t_prev,
                 const Tensor& eps_hat, double sigma, const Tensor* noise) {
    check_same_shape(zt, eps_hat, "ddim_step");
    if (t_prev >= t) throw OutOfRange("ddim_step: t_prev must be < t");
    double ab = s.alpha_bar(t);
    double ab_prev = s.alpha_bar(t_prev);
    if (sigma < 0.0) throw InvalidSigma("sigma < 0");
    double rem = 1.0 - ab_prev - sigma * sigma;
    if (rem < -1e-15) throw InvalidSigma("sigma^2 > 1 - alpha_bar(t_prev)");
    if (rem < 0.0) rem = 0.0;
    if (sigma > 0.0 && noise == nullptr) throw InvalidParams("ddim_step: sigma > 0 needs noise");

    // predicted z0, then re-noised at level t_prev
    Tensor out = zt;
    out.axpy_(-std::sqrt(1.0 - ab), eps_hat);
    out.scale_(std::sqrt(ab_prev) / std::sqrt(ab));
    out.axpy_(std::sqrt(rem), eps_hat);
    if (sigma > 0.0) {
        check_same_shape(zt, *noise, "ddim_step noise");
        out.axpy_(sigma, *noise);
    }
    return out;
}

double ancestral_sigma(const NoiseSchedule& s, int t, int t_prev) {
    double ab = s.alpha_bar(t);
    double ab_prev = s.alpha_bar(t_prev);
    double var = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev);
    return var > 0.0 ? std::sqrt(var) : 0.0;
}

Tensor guided_epsilon(const NoiseSchedule& s, int t, const Tensor& eps, const Tensor& g) {
    check_same_shape(eps, g, "guided_epsilon");
    Tensor out = eps;
    out.axpy_(-std::sqrt(1.0 - s.alpha_bar(t)), g);
    return out;
}

Tensor guided_mean_shift(const NoiseSchedule& s, int t, const Tensor& mean, const Tensor& g) {
    check_same_shape(mean, g, "guided_mean_shift");
    Tensor out = mean;
    out.axpy_(s.posterior_var(t), g);
    return out;
}

namespace {

Tensor predict_guided(const NoiseSchedule& s, const Tensor& zt, int t, EpsilonPredictor& pred,
                      GuidancePredictor* guide, const Tensor* y_sem) {
    // Predictors are trained on t in [1,T]; inversion starts at t = 0.
    int t_eval = t < 1 ? 1 : t;
    Tensor eps = pred.predict(zt, t_eval);
    check_same_shape(zt, eps, "predictor output");
    if (!guide) return eps;
    Tensor g = guide->estimate(zt, *y_sem, t_eval);
    return guided_epsilon(s, t_eval, eps, g);
}

}  // namespace

Tensor ddim_invert_step(const NoiseSchedule& s, const Tensor& zt, int t, int t_next,
                        EpsilonPredictor& pred, GuidancePredictor* guide, const Tensor* y_sem) {
    if (t_next <= t) throw OutOfRange("ddim_invert_step: t_next must be > t");
    Tensor eps_hat = predict_guided(s, zt, t, pred, guide, y_sem);
    double ab = s.alpha_bar(t);
    double ab_next = s.alpha_bar(t_next);
    // f = (zt - sqrt(1-abar_t) eps) / sqrt(abar_t); out = sqrt(abar_next) f + sqrt(1-abar_next) eps
    Tensor out = zt;
    out.axpy_(-std::sqrt(1.0 - ab), eps_hat);
    out.scale_(std::sqrt(ab_next) / std::sqrt(ab));
    out.axpy_(std::sqrt(1.0 - ab_next), eps_hat);
    return out;
}

Tensor sample_loop(const NoiseSchedule& s, EpsilonPredictor& pred, const std::vector<int>& shape,
                   const SampleOptions& opt) {
    if (opt.n_steps < 1 || opt.n_steps > s.T) throw OutOfRange("sample_loop: n_steps out of [1,T]");
    if (opt.guide && !opt.y_sem) throw InvalidParams("sample_loop: guidance needs y_sem");
    Rng rng(opt.seed);
    Tensor z = Tensor::randn(shape, rng);
    std::vector<int> seq = schedule::substep_sequence(s, opt.n_steps);
    for (int i = static_cast<int>(seq.size()) - 1; i >= 0; --i) {
        int t = seq[i];
        int t_prev = i > 0 ? seq[i - 1] : 0;
        if (opt.mode == SampleMode::kDeterministic) {
            Tensor eps_hat = predict_guided(s, z, t, pred, opt.guide, opt.y_sem);
            z = ddim_step(s, z, t, t_prev, eps_hat, 0.0);
        } else {
            Tensor eps_hat = pred.predict(z, t);
            check_same_shape(z, eps_hat, "predictor output");
            double sigma = ancestral_sigma(s, t, t_prev);
            // posterior mean is the sigma-adjusted update without the noise term
            Tensor zeros(z.shape);
            Tensor mean = ddim_step(s, z, t, t_prev, eps_hat, sigma, &zeros);
            if (opt.guide) {
                Tensor g = opt.guide->estimate(z, *opt.y_sem, t);
                mean = guided_mean_shift(s, t, mean, g);
            }
            if (sigma > 0.0) {
                Tensor noise = Tensor::randn(shape, rng);
                mean.axpy_(sigma, noise);
            }
            z = std::move(mean);
        }
    }
    return z;
}

Tensor invert_loop(const NoiseSchedule& s, const Tensor& z0, int n_steps, EpsilonPredictor& pred,
                   GuidancePredictor* guide, const Tensor* y_sem) {
    std::vector<int> seq = schedule::substep_sequence(s, n_steps);
    Tensor z = z0;
    int t = 0;
    for (int t_next : seq) {
        z = ddim_invert_step(s, z, t, t_next, pred, guide, y_sem);
        t = t_next;
    }
    return z;
}

Tensor decode_loop(const NoiseSchedule& s, const Tensor& zT, int n_steps, EpsilonPredictor& pred,
                   GuidancePredictor* guide, const Tensor* y_sem) {
    std::vector<int> seq = schedule::substep_sequence(s, n_steps);
    Tensor z = zT;
    for (int i = static_cast<int>(seq.size()) - 1; i >= 0; --i) {
        int t = seq[i];
        int t_prev = i > 0 ? seq[i - 1] : 0;
        Tensor eps_hat = predict_guided(s, z, t, pred, guide, y_sem);
        z = ddim_step(s, z, t, t_prev, eps_hat, 0.0);
    }
    return z;
}

}  // namespace ldae::diffusion
