#pragma once

#include <utility>
#include <vector>

#include "ldae/compression.hpp"
#include "ldae/diffusion.hpp"
#include "ldae/networks.hpp"
#include "ldae/volume.hpp"

namespace ldae::latentops {

// Frozen model bundle used by all latent-space operations. A null compressor
// means identity compression (the voxel-space baseline).
struct Models {
    const schedule::NoiseSchedule* sched = nullptr;
    nets::CompressionAE* ae = nullptr;
    compression::LatentScaler scaler;
    nets::UNet3d* eps = nullptr;
    nets::GradEstimator* g = nullptr;
    nets::SemanticEncoder* enc = nullptr;

    Tensor encode_image(const Volume& x) const;
    Volume decode_image(const Tensor& z) const;
    std::vector<int> latent_shape(const Volume& x) const;
};

// Semantic code plus the stochastic code recovered by guided DDIM inversion.
struct DualCode {
    Tensor y_sem;
    Tensor z_T;
};

// Unit-normal hyperplane direction of a linear classifier on semantic codes;
// the positive class sits on the +w side.
struct DirectionVector {
    Tensor w;
    double b = 0.0;
    int positive_class_label = 1;
};

// Epsilon predictor and guidance that share one frozen down-path evaluation
// per (z_t, t); safe while the underlying weights stay fixed.
class SharedGuided final : public diffusion::EpsilonPredictor, public diffusion::GuidancePredictor {
public:
    SharedGuided(nets::UNet3d* eps, nets::GradEstimator* g) : eps_(eps), g_(g) {}
    Tensor predict(const Tensor& z, int t) override;
    Tensor estimate(const Tensor& z, const Tensor& y, int t) override;

private:
    const nets::DownState& down(const Tensor& z, int t);
    nets::UNet3d* eps_;
    nets::GradEstimator* g_;
    nets::DownState ds_;
    std::uint64_t key_ = 0;
    bool valid_ = false;
};

// invert_steps == 0 runs the full T grid (the default for reconstruction
// metrics); anything else is substep inversion.
DualCode encode_dual(const Models& m, const Volume& x0, int invert_steps = 0);

Volume decode_dual(const Models& m, const DualCode& code, int n_steps);

// Logistic direction fit on raw (unstandardized) semantic codes.
DirectionVector fit_direction(const std::vector<std::pair<Tensor, int>>& codes);

// decode_dual with y_sem shifted by alpha * w; the stochastic code is reused.
Volume manipulate(const Models& m, const DualCode& code, const DirectionVector& dir, double alpha,
                  int n_steps);

Tensor lerp(const Tensor& a, const Tensor& b, double t);
Tensor slerp(const Tensor& a, const Tensor& b, double t);

Volume interpolate_pair(const Models& m, const Volume& x_start, const Volume& x_end, double t,
                        int n_steps, int invert_steps = 0);

// Interpolated codes without the decode, for callers that reuse inversions.
DualCode interpolate_codes(const DualCode& a, const DualCode& b, double t);

}  // namespace ldae::latentops
