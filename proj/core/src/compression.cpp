#include "ldae/compression.hpp"

#include <chrono>
#include <cmath>

#include "ldae/metrics.hpp"
#include "ldae/trainlog.hpp"

namespace ldae::compression {

double kl_penalty(const Tensor& mean, const Tensor& logvar) {
    check_same_shape(mean, logvar, "kl_penalty");
    double acc = 0.0;
    for (std::int64_t i = 0; i < mean.numel(); ++i) {
        double m = mean.v[i], lv = logvar.v[i];
        acc += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
    double out = acc / static_cast<double>(mean.numel());
    if (!std::isfinite(out)) throw NonFinite("kl_penalty");
    return out;
}

Tensor encode(nets::CompressionAE& net, const LatentScaler& scaler, const Volume& x) {
    auto [mean, logvar] = net.encode_dist(x.to_tensor());
    (void)logvar;
    mean.scale_(scaler.scale);
    return mean;
}

Volume decode(nets::CompressionAE& net, const LatentScaler& scaler, const Tensor& z) {
    Tensor raw = z;
    raw.scale_(1.0 / scaler.scale);
    Tensor xr = net.decode_raw(raw);
    return clamp01(Volume::from_tensor(xr));
}

AeState make_ae_state(const nets::NetworkSpec& spec, const CompressionTrainConfig& cfg) {
    AeState st;
    st.net = std::make_unique<nets::CompressionAE>(spec, cfg.seed);
    st.adam = nets::Adam(cfg.lr);
    st.adam.init(st.net->params());
    return st;
}

void run_ae_training(AeState& state, const std::vector<Volume>& train,
                     const std::vector<Volume>& val, const CompressionTrainConfig& cfg,
                     const std::string& log_path, std::uint64_t config_hash) {
    if (train.empty()) throw InvalidParams("run_ae_training: empty train split");
    nets::CompressionAE& net = *state.net;
    nets::ParamList params = net.params();
    training::TrainLog log(log_path, config_hash, cfg.seed);

    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, 100, static_cast<std::uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }

        double epoch_loss = 0.0;
        int epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t stop = std::min(order.size(), start + cfg.batch);
            int bn = static_cast<int>(stop - start);
            nets::zero_grads(params);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const Volume& vol = train[order[k]];
                Tensor x = vol.to_tensor();
                auto [mean, logvar] = net.encode_dist(x);
                Tensor eps = Tensor::randn(mean.shape, rng);
                Tensor z = mean;
                for (std::int64_t i = 0; i < z.numel(); ++i)
                    z.v[i] += std::exp(0.5 * logvar.v[i]) * eps.v[i];
                Tensor xr = net.decode_raw(z);

                const double n_vox = static_cast<double>(x.numel());
                const double n_lat = static_cast<double>(mean.numel());
                double recon = 0.0;
                Tensor dxr(xr.shape);
                for (std::int64_t i = 0; i < x.numel(); ++i) {
                    double d = xr.v[i] - x.v[i];
                    recon += d * d;
                    dxr.v[i] = 2.0 * d / n_vox;
                }
                recon /= n_vox;
                double kl = kl_penalty(mean, logvar);
                double loss = recon + cfg.kl_weight * kl;
                if (!std::isfinite(loss)) throw Diverged("autoencoder loss is not finite");
                batch_loss += loss;

                Tensor dz = net.decode_backward(dxr);
                Tensor dmean = dz;
                Tensor dlogvar(logvar.shape);
                for (std::int64_t i = 0; i < dz.numel(); ++i) {
                    dlogvar.v[i] = dz.v[i] * 0.5 * std::exp(0.5 * logvar.v[i]) * eps.v[i];
                    dmean.v[i] += cfg.kl_weight * mean.v[i] / n_lat;
                    dlogvar.v[i] += cfg.kl_weight * (-0.5) * (1.0 - std::exp(logvar.v[i])) / n_lat;
                }
                net.encode_backward(dmean, dlogvar);
            }
            state.adam.step(params, 1.0 / bn);
            epoch_loss += batch_loss / bn;
            ++epoch_batches;
        }
        epoch_loss /= std::max(1, epoch_batches);
        state.final_loss = epoch_loss;

        // validation SSIM of the deterministic posterior-mean reconstruction
        if (!val.empty()) {
            double val_ssim = 0.0;
            for (const Volume& vol : val) {
                auto [mean, logvar] = net.encode_dist(vol.to_tensor());
                (void)logvar;
                Volume rec = clamp01(Volume::from_tensor(net.decode_raw(mean)));
                val_ssim += evaluation::ssim3d(vol, rec);
            }
            val_ssim /= static_cast<double>(val.size());
            if (val_ssim > state.best_val_ssim || state.best_epoch < 0) {
                state.best_val_ssim = val_ssim;
                state.best_epoch = epoch;
                state.best_values.clear();
                for (auto& np : params) state.best_values.push_back(np.p->value);
            }
        }
        state.epochs_done = epoch + 1;
        auto t1 = std::chrono::steady_clock::now();
        log.row(epoch, state.adam.steps_taken(), epoch_loss, 1.0, cfg.lr,
                std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
}

LatentScaler finish_autoencoder(AeState& state, const std::vector<Volume>& train,
                                int scaler_batch) {
    nets::ParamList params = state.net->params();
    if (!state.best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i].p->value = state.best_values[i];

    int nb = std::min<int>(scaler_batch, static_cast<int>(train.size()));
    double sum = 0.0, sq = 0.0;
    std::int64_t count = 0;
    for (int i = 0; i < nb; ++i) {
        auto [mean, logvar] = state.net->encode_dist(train[i].to_tensor());
        (void)logvar;
        for (double v : mean.v) {
            sum += v;
            sq += v * v;
        }
        count += mean.numel();
    }
    double mu = sum / static_cast<double>(count);
    double var = sq / static_cast<double>(count) - mu * mu;
    LatentScaler scaler;
    scaler.scale = 1.0 / std::sqrt(std::max(var, 1e-12));
    return scaler;
}

}  // namespace ldae::compression
