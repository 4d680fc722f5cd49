#pragma once

#include <cstdint>
#include <vector>

#include "ldae/common.hpp"

namespace ldae::schedule {

// Precomputed per-timestep scalars of a diffusion noise schedule. Arrays are
// indexed by timestep t in [1, T]; alpha_bar(0) == 1 by convention. Immutable
// after construction and freely shareable.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    double gamma = 0.0;
    std::vector<double> betas;           // beta_t,                 size T+1, [0] unused
    std::vector<double> alphas;          // 1 - beta_t
    std::vector<double> alpha_bars;      // prod alpha_i, size T+1, [0] == 1
    std::vector<double> posterior_vars;  // beta~_t = (1-abar_{t-1})/(1-abar_t) * beta_t
    std::vector<double> snrs;            // abar_t / (1 - abar_t)
    std::vector<double> loss_weights;    // lambda_t

    double beta(int t) const { return betas[check(t)]; }
    double alpha(int t) const { return alphas[check(t)]; }
    double alpha_bar(int t) const {
        if (t < 0 || t > T) throw OutOfRange("alpha_bar: t out of [0,T]");
        return alpha_bars[t];
    }
    double posterior_var(int t) const { return posterior_vars[check(t)]; }
    double snr(int t) const { return snrs[check(t)]; }

    std::uint64_t beta_hash() const;

private:
    int check(int t) const {
        if (t < 1 || t > T) throw OutOfRange("timestep out of [1,T]");
        return t;
    }
};

// beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start), endpoints inclusive.
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end, double gamma);

// lambda_t = (1/(1+SNR))^(1-gamma) * (SNR/(1+SNR))^gamma
double loss_weight(const NoiseSchedule& s, int t);

// Uniform-stride ascending subsequence of {1..T} ending at T, length n_steps.
std::vector<int> substep_sequence(const NoiseSchedule& s, int n_steps);

}  // namespace ldae::schedule
