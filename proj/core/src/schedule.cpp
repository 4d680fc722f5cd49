#include "ldae/schedule.hpp"

#include <cmath>

namespace ldae::schedule {

std::uint64_t NoiseSchedule::beta_hash() const {
    return fnv1a64(betas.data() + 1, sizeof(double) * static_cast<std::size_t>(T));
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end, double gamma) {
    if (T < 2) throw InvalidRange("T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidRange("need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.gamma = gamma;
    s.betas.assign(T + 1, 0.0);
    s.alphas.assign(T + 1, 0.0);
    s.alpha_bars.assign(T + 1, 0.0);
    s.posterior_vars.assign(T + 1, 0.0);
    s.snrs.assign(T + 1, 0.0);
    s.loss_weights.assign(T + 1, 0.0);

    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        s.betas[t] = beta_start + frac * (beta_end - beta_start);
        s.alphas[t] = 1.0 - s.betas[t];
        s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t];
        s.posterior_vars[t] = (1.0 - s.alpha_bars[t - 1]) / (1.0 - s.alpha_bars[t]) * s.betas[t];
        s.snrs[t] = s.alpha_bars[t] / (1.0 - s.alpha_bars[t]);
    }
    for (int t = 1; t <= T; ++t) {
        double snr = s.snrs[t];
        s.loss_weights[t] =
            std::pow(1.0 / (1.0 + snr), 1.0 - gamma) * std::pow(snr / (1.0 + snr), gamma);
    }
    return s;
}

double loss_weight(const NoiseSchedule& s, int t) {
    if (t < 1 || t > s.T) throw OutOfRange("loss_weight: t out of [1,T]");
    return s.loss_weights[t];
}

std::vector<int> substep_sequence(const NoiseSchedule& s, int n_steps) {
    if (n_steps < 1 || n_steps > s.T) throw OutOfRange("substep_sequence: n_steps out of [1,T]");
    std::vector<int> seq;
    seq.reserve(n_steps);
    for (int i = 1; i <= n_steps; ++i) {
        int t = static_cast<int>(std::llround(static_cast<double>(s.T) * i / n_steps));
        if (t < 1) t = 1;
        if (seq.empty() || seq.back() != t) seq.push_back(t);
    }
    return seq;
}

}  // namespace ldae::schedule
