#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ldae/diffusion.hpp"
#include "ldae/layers.hpp"

namespace ldae::nets {

// One spec covers all four roles; each network reads the fields it needs.
struct NetworkSpec {
    std::string role;  // eps_unet | grad_estimator | semantic_enc | compressor
    int in_channels = 2;
    std::vector<int> channels = {32, 64};  // UNet widths per level
    int groups = 8;
    int t_dim = 64;
    bool attn_deepest = true;
    int attn_heads = 4;
    int d_sem = 64;
    std::vector<int> tower_channels = {8, 16, 32};  // semantic slice tower
    int in_h = 16, in_w = 16;                       // slice plane for the tower
    int c_lat = 2;
    int f = 4;
    std::vector<int> comp_channels = {8, 16, 32};

    void validate() const;
};

// Frozen-path activations shared between the denoiser tail and the gradient
// estimator branch.
struct DownState {
    int t = 0;
    Tensor t_emb;
    std::vector<Tensor> skips;  // down_res output per level
};

struct UpStage {
    Upsample3d up;
    std::unique_ptr<Conv3d> conv;
};

// Time-conditioned 3D UNet noise predictor. Skip connections: one per level,
// consumed by the matching up block; self-attention at the deepest level.
class UNet3d {
public:
    UNet3d(const NetworkSpec& spec, std::uint64_t seed);

    Tensor forward(const Tensor& z, int t);
    const DownState& forward_down(const Tensor& z, int t);
    Tensor forward_tail(const DownState& ds);
    // Full backward; returns d(input) and accumulates all parameter grads.
    Tensor backward(const Tensor& deps);
    ParamList params();
    const NetworkSpec& spec() const { return spec_; }

    NetworkSpec spec_;
    TimeMlp time_mlp;
    Conv3d in_conv;
    std::vector<std::unique_ptr<ResBlock3d>> down_res;
    std::vector<std::unique_ptr<Conv3d>> downsamplers;
    std::unique_ptr<ResBlock3d> mid1, mid2;
    std::unique_ptr<SelfAttention3d> mid_attn;
    std::vector<std::unique_ptr<ResBlock3d>> up_res;
    std::vector<std::unique_ptr<UpStage>> ups;
    std::unique_ptr<AdaGN> out_norm;
    SiLU out_act;
    std::unique_ptr<Conv3d> out_conv;

private:
    UNet3d(const NetworkSpec& spec, Rng rng);
    DownState ds_;
    std::vector<Tensor> dskips_;  // accumulated skip grads during backward
};

// Second decoder branch over the frozen UNet encoder; AdaGN injects both the
// timestep and the semantic code. Output conv starts at zero so guidance is
// exactly zero at initialization.
class GradEstimator {
public:
    GradEstimator(UNet3d* shared, std::uint64_t seed);

    Tensor forward(const Tensor& z, int t, const Tensor& y_sem);
    Tensor forward_from_down(const DownState& ds, const Tensor& y_sem);
    // Accumulates own parameter grads only; returns d(y_sem).
    Tensor backward(const Tensor& dg);
    ParamList params();  // own (trainable) parameters only

    UNet3d* shared;
    std::unique_ptr<ResBlock3d> mid1, mid2;
    std::unique_ptr<SelfAttention3d> mid_attn;
    std::vector<std::unique_ptr<ResBlock3d>> up_res;
    std::vector<std::unique_ptr<UpStage>> ups;
    std::unique_ptr<AdaGN> out_norm;
    SiLU out_act;
    std::unique_ptr<Conv3d> out_conv;

private:
    int levels_;
    int d_sem_;
};

// 2.5D semantic encoder: shared 2D conv tower per axial slice (+ sinusoidal
// slice-position features), soft attention pooling, then cross attention of
// the pooled query against the slice sequence.
class SemanticEncoder {
public:
    SemanticEncoder(const NetworkSpec& spec, std::uint64_t seed);

    Tensor forward(const Tensor& vol);  // (1,D,H,W) -> (d_sem)
    // Tower activations are recomputed per slice during backward.
    void backward(const Tensor& dy);
    ParamList params();
    const Tensor& attention_weights() const { return *soft_weights_; }

    NetworkSpec spec_;
    std::vector<std::unique_ptr<Conv2d>> tconvs;
    std::vector<std::unique_ptr<GroupNorm>> tnorms;
    std::vector<std::unique_ptr<SiLU>> tacts;
    std::unique_ptr<Linear> embed;
    std::unique_ptr<SoftAttention> soft;
    std::unique_ptr<MultiHeadAttention> cross;

private:
    SemanticEncoder(const NetworkSpec& spec, Rng rng);
    Tensor tower_forward(const Tensor& slice);
    void tower_backward(const Tensor& de);
    Tensor vol_;
    Tensor E_;
    const Tensor* soft_weights_ = nullptr;
    int flat_dim_ = 0;
    std::vector<int> tower_out_shape_;
};

// KL-regularized compression autoencoder; encoder emits mean and log-variance
// of the latent posterior, decoder mirrors with nearest-neighbor upsampling.
class CompressionAE {
public:
    CompressionAE(const NetworkSpec& spec, std::uint64_t seed);

    std::pair<Tensor, Tensor> encode_dist(const Tensor& x);  // (mean, logvar)
    Tensor decode_raw(const Tensor& z);                      // unclamped
    void encode_backward(const Tensor& dmean, const Tensor& dlogvar);
    Tensor decode_backward(const Tensor& dxr);  // returns dz
    ParamList params();
    const NetworkSpec& spec() const { return spec_; }

    NetworkSpec spec_;
    // encoder
    Conv3d e_in;
    std::unique_ptr<ResBlock3d> e_rb_in;
    std::vector<std::unique_ptr<Conv3d>> e_down;
    std::vector<std::unique_ptr<ResBlock3d>> e_rb;
    std::unique_ptr<GroupNorm> e_norm;
    SiLU e_act;
    std::unique_ptr<Conv3d> e_out;  // -> 2 * c_lat
    // decoder
    std::unique_ptr<Conv3d> d_in;
    std::unique_ptr<ResBlock3d> d_rb_in;
    std::vector<std::unique_ptr<UpStage>> d_up;
    std::vector<std::unique_ptr<ResBlock3d>> d_rb;
    std::unique_ptr<GroupNorm> d_norm;
    SiLU d_act;
    std::unique_ptr<Conv3d> d_out;

private:
    CompressionAE(const NetworkSpec& spec, Rng rng);
    int n_down_;
};

// shadow <- decay * shadow + (1 - decay) * current
class Ema {
public:
    Ema() = default;
    explicit Ema(const ParamList& params);
    void update(const ParamList& params, double decay);
    void apply(ParamList& params) const;
    std::vector<Tensor> shadow;
};

struct UNetPredictor final : diffusion::EpsilonPredictor {
    UNet3d* net;
    explicit UNetPredictor(UNet3d* n) : net(n) {}
    Tensor predict(const Tensor& z, int t) override { return net->forward(z, t); }
};

struct GradGuidance final : diffusion::GuidancePredictor {
    GradEstimator* g;
    explicit GradGuidance(GradEstimator* g_) : g(g_) {}
    Tensor estimate(const Tensor& z, const Tensor& y, int t) override { return g->forward(z, t, y); }
};

// Factory used by tests and checkpoint loading.
std::unique_ptr<UNet3d> build_unet(const NetworkSpec& spec, std::uint64_t seed);

std::uint64_t hash_params(ParamList params);

}  // namespace ldae::nets
