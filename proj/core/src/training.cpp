#include "ldae/training.hpp"

#include <chrono>
#include <cmath>

#include "ldae/metrics.hpp"
#include "ldae/trainlog.hpp"

namespace ldae::training {

double ldm_loss(const NoiseSchedule& s, diffusion::EpsilonPredictor& pred, const Tensor& z0, int t,
                const Tensor& eps) {
    Tensor zt = diffusion::forward_sample(s, z0, t, eps);
    Tensor out = pred.predict(zt, t);
    check_same_shape(out, eps, "ldm_loss");
    double acc = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        double d = out.v[i] - eps.v[i];
        acc += d * d;
    }
    double loss = acc / static_cast<double>(out.numel());
    if (!std::isfinite(loss)) throw NonFinite("ldm_loss");
    return loss;
}

double ldae_coef(const NoiseSchedule& s, int t) {
    return std::sqrt(s.alpha(t)) * std::sqrt(1.0 - s.alpha_bar(t)) / s.beta(t) * s.posterior_var(t);
}

double ldae_residual_loss(const NoiseSchedule& s, int t, const Tensor& eps, const Tensor& eps_pred,
                          const Tensor& g) {
    check_same_shape(eps, eps_pred, "ldae_residual_loss");
    check_same_shape(eps, g, "ldae_residual_loss");
    double coef = ldae_coef(s, t);
    double acc = 0.0;
    for (std::int64_t i = 0; i < eps.numel(); ++i) {
        double r = eps.v[i] - eps_pred.v[i] + coef * g.v[i];
        acc += r * r;
    }
    double loss = schedule::loss_weight(s, t) * acc / static_cast<double>(eps.numel());
    if (!std::isfinite(loss)) throw NonFinite("ldae_residual_loss");
    return loss;
}

double ldae_loss(const NoiseSchedule& s, nets::UNet3d& frozen_eps, nets::GradEstimator& g_est,
                 nets::SemanticEncoder& enc, const Volume& x0, const Tensor& z0, int t,
                 const Tensor& eps) {
    Tensor zt = diffusion::forward_sample(s, z0, t, eps);
    Tensor y = enc.forward(x0.to_tensor());
    const nets::DownState& ds = frozen_eps.forward_down(zt, t);
    Tensor eps_pred = frozen_eps.forward_tail(ds);
    Tensor g = g_est.forward_from_down(ds, y);
    return ldae_residual_loss(s, t, eps, eps_pred, g);
}

namespace {

void shuffle_in_place(std::vector<int>& order, Rng& rng) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(order[i], order[j]);
    }
}

// temporarily swap EMA weights in for validation decoding
struct EmaSwap {
    nets::ParamList& params;
    std::vector<Tensor> saved;
    EmaSwap(nets::ParamList& p, const nets::Ema& ema) : params(p) {
        saved.reserve(p.size());
        for (auto& np : p) saved.push_back(np.p->value);
        ema.apply(p);
    }
    ~EmaSwap() {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].p->value = saved[i];
    }
};

}  // namespace

LdmState make_ldm_state(const nets::NetworkSpec& spec, const TrainConfig& cfg) {
    LdmState st;
    st.net = std::make_unique<nets::UNet3d>(spec, cfg.seed);
    nets::ParamList params = st.net->params();
    st.adam = nets::Adam(cfg.lr);
    st.adam.init(params);
    st.ema = nets::Ema(params);
    return st;
}

void run_ldm_training(LdmState& state, const std::vector<Tensor>& latents, const NoiseSchedule& s,
                      const TrainConfig& cfg, const std::string& log_path,
                      std::uint64_t config_hash) {
    if (latents.empty()) throw InvalidParams("run_ldm_training: no latents");
    nets::UNet3d& net = *state.net;
    nets::ParamList params = net.params();
    TrainLog log(log_path, config_hash, cfg.seed);

    std::vector<int> order(latents.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, 200, static_cast<std::uint64_t>(epoch)));
        shuffle_in_place(order, rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t stop = std::min(order.size(), start + cfg.batch);
            int bn = static_cast<int>(stop - start);
            nets::zero_grads(params);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const Tensor& z0 = latents[order[k]];
                int t = static_cast<int>(rng.uniform_int(1, s.T));
                Tensor eps = Tensor::randn(z0.shape, rng);
                Tensor zt = diffusion::forward_sample(s, z0, t, eps);
                Tensor pred = net.forward(zt, t);
                const double n = static_cast<double>(pred.numel());
                double loss = 0.0;
                Tensor dpred(pred.shape);
                for (std::int64_t i = 0; i < pred.numel(); ++i) {
                    double d = pred.v[i] - eps.v[i];
                    loss += d * d;
                    dpred.v[i] = 2.0 * d / n;
                }
                loss /= n;
                if (!std::isfinite(loss)) throw Diverged("ldm loss is not finite");
                batch_loss += loss;
                net.backward(dpred);
            }
            state.adam.step(params, 1.0 / bn);
            state.ema.update(params, cfg.ema_decay);
            epoch_loss += batch_loss / bn;
            ++batches;
        }
        epoch_loss /= std::max(1, batches);
        state.final_loss = epoch_loss;
        state.epochs_done = epoch + 1;
        auto t1 = std::chrono::steady_clock::now();
        log.row(epoch, state.adam.steps_taken(), epoch_loss, 1.0, cfg.lr,
                std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    // soft smoothing check on a fixed probe set: EMA loss vs raw loss, logged
    if (state.epochs_done == cfg.epochs && !latents.empty()) {
        auto probe_loss = [&] {
            Rng prng(derive_seed(cfg.seed, 201));
            nets::UNetPredictor pred(state.net.get());
            double acc = 0.0;
            int n = std::min<int>(16, static_cast<int>(latents.size()));
            for (int i = 0; i < n; ++i) {
                int t = static_cast<int>(prng.uniform_int(1, s.T));
                Tensor eps = Tensor::randn(latents[i].shape, prng);
                acc += ldm_loss(s, pred, latents[i], t, eps);
            }
            return acc / n;
        };
        double raw_loss = probe_loss();
        nets::ParamList params2 = state.net->params();
        std::vector<Tensor> saved;
        for (auto& np : params2) saved.push_back(np.p->value);
        state.ema.apply(params2);
        double ema_loss = probe_loss();
        for (std::size_t i = 0; i < params2.size(); ++i) params2[i].p->value = saved[i];
        char buf[128];
        std::snprintf(buf, sizeof buf, "final_probe_loss raw=%.9g ema=%.9g ema_smoother=%d",
                      raw_loss, ema_loss, ema_loss <= raw_loss ? 1 : 0);
        log.comment(buf);
    }
}

LdaeState make_ldae_state(nets::UNet3d& frozen_eps, const nets::NetworkSpec& semantic_spec,
                          const TrainConfig& cfg) {
    LdaeState st;
    st.enc = std::make_unique<nets::SemanticEncoder>(semantic_spec, cfg.seed);
    st.g = std::make_unique<nets::GradEstimator>(&frozen_eps, cfg.seed + 1);
    nets::ParamList enc_params = st.enc->params();
    nets::ParamList g_params = st.g->params();
    st.enc_adam = nets::Adam(cfg.lr);
    st.g_adam = nets::Adam(cfg.lr);
    st.enc_adam.init(enc_params);
    st.g_adam.init(g_params);
    st.enc_ema = nets::Ema(enc_params);
    st.g_ema = nets::Ema(g_params);
    return st;
}

void run_ldae_training(LdaeState& state, const std::vector<Volume>& train_vols,
                       const std::vector<Tensor>& train_lats, const std::vector<Volume>& val_vols,
                       const NoiseSchedule& s, nets::UNet3d& frozen_eps, const TrainConfig& cfg,
                       const std::function<Volume(const Tensor&)>& decode_to_volume,
                       const std::string& log_path, std::uint64_t config_hash) {
    if (train_vols.size() != train_lats.size() || train_vols.empty())
        throw InvalidParams("run_ldae_training: bad training pairs");

    const std::uint64_t frozen_before = nets::hash_params(frozen_eps.params());

    nets::SemanticEncoder& enc = *state.enc;
    nets::GradEstimator& g_est = *state.g;
    nets::ParamList enc_params = enc.params();
    nets::ParamList g_params = g_est.params();
    TrainLog log(log_path, config_hash, cfg.seed);

    std::vector<int> order(train_vols.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, 300, static_cast<std::uint64_t>(epoch)));
        shuffle_in_place(order, rng);
        double epoch_loss = 0.0, epoch_lambda = 0.0;
        std::int64_t samples = 0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t stop = std::min(order.size(), start + cfg.batch);
            int bn = static_cast<int>(stop - start);
            nets::zero_grads(enc_params);
            nets::zero_grads(g_params);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const Volume& x0 = train_vols[order[k]];
                const Tensor& z0 = train_lats[order[k]];
                int t = static_cast<int>(rng.uniform_int(1, s.T));
                Tensor eps = Tensor::randn(z0.shape, rng);
                Tensor zt = diffusion::forward_sample(s, z0, t, eps);

                Tensor y = enc.forward(x0.to_tensor());
                const nets::DownState& ds = frozen_eps.forward_down(zt, t);
                Tensor eps_pred = frozen_eps.forward_tail(ds);
                Tensor g = g_est.forward_from_down(ds, y);

                const double n = static_cast<double>(eps.numel());
                const double coef = ldae_coef(s, t);
                const double lambda = schedule::loss_weight(s, t);
                double loss = 0.0;
                Tensor dg(g.shape);
                for (std::int64_t i = 0; i < eps.numel(); ++i) {
                    double r = eps.v[i] - eps_pred.v[i] + coef * g.v[i];
                    loss += r * r;
                    dg.v[i] = lambda * 2.0 * r * coef / n;
                }
                loss = lambda * loss / n;
                if (!std::isfinite(loss)) throw Diverged("ldae loss is not finite");
                batch_loss += loss;
                epoch_lambda += lambda;
                ++samples;

                Tensor dy = g_est.backward(dg);
                enc.backward(dy);
            }
            state.enc_adam.step(enc_params, 1.0 / bn);
            state.g_adam.step(g_params, 1.0 / bn);
            state.enc_ema.update(enc_params, cfg.ema_decay);
            state.g_ema.update(g_params, cfg.ema_decay);
            epoch_loss += batch_loss / bn;
            ++batches;
        }
        epoch_loss /= std::max(1, batches);
        state.final_loss = epoch_loss;

        // model selection: decode pure noise guided by y_sem only, SSIM against
        // the original volume, evaluated with the EMA weights
        double val_ssim = 0.0;
        if (!val_vols.empty()) {
            EmaSwap swap_enc(enc_params, state.enc_ema);
            EmaSwap swap_g(g_params, state.g_ema);
            nets::UNetPredictor pred(&frozen_eps);
            nets::GradGuidance guide(&g_est);
            for (std::size_t vi = 0; vi < val_vols.size(); ++vi) {
                Tensor y = enc.forward(val_vols[vi].to_tensor());
                Rng nrng(derive_seed(cfg.seed, 301, vi));
                Tensor zT = Tensor::randn(train_lats[0].shape, nrng);
                Tensor z0hat = diffusion::decode_loop(s, zT, cfg.val_substeps, pred, &guide, &y);
                Volume rec = decode_to_volume(z0hat);
                val_ssim += evaluation::ssim3d(val_vols[vi], rec);
            }
            val_ssim /= static_cast<double>(val_vols.size());
            if (val_ssim > state.best_val_ssim || state.best_epoch < 0) {
                state.best_val_ssim = val_ssim;
                state.best_epoch = epoch;
                state.best_enc_shadow = state.enc_ema.shadow;
                state.best_g_shadow = state.g_ema.shadow;
            }
        } else if (state.best_epoch < 0) {
            state.best_enc_shadow = state.enc_ema.shadow;
            state.best_g_shadow = state.g_ema.shadow;
            state.best_epoch = epoch;
        }
        state.epochs_done = epoch + 1;
        auto t1 = std::chrono::steady_clock::now();
        log.row(epoch, state.g_adam.steps_taken(), epoch_loss,
                epoch_lambda / std::max<std::int64_t>(1, samples), cfg.lr,
                std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    if (val_vols.empty()) {
        // keep the latest shadows when no validation drives selection
        state.best_enc_shadow = state.enc_ema.shadow;
        state.best_g_shadow = state.g_ema.shadow;
    }

    if (nets::hash_params(frozen_eps.params()) != frozen_before)
        throw FrozenViolation("eps predictor parameters changed during the representation stage");
}

}  // namespace ldae::training
