#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ldae/tensor.hpp"

namespace ldae::nets {

struct Param {
    Tensor value;
    Tensor grad;

    explicit Param(std::vector<int> shape) : value(shape), grad(std::move(shape)) {}
    void zero_grad() { grad.fill(0.0); }
};

struct NamedParam {
    std::string name;
    Param* p;
};
using ParamList = std::vector<NamedParam>;

void zero_grads(ParamList& params);
std::int64_t param_count(const ParamList& params);

// Layers cache whatever the matching backward needs; one in-flight
// forward/backward pair per instance.

class Linear {
public:
    Linear(int in, int out, Rng& rng, double wstd = 0.02);
    // x rank 1 (in) or rank 2 (rows, in)
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, ParamList& out);

    Param w;  // (out, in)
    Param b;  // (out)
    int in_dim, out_dim;

private:
    Tensor x_;
};

class SiLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    Tensor x_;
};

class Conv3d {
public:
    Conv3d(int in_c, int out_c, int stride, Rng& rng, int kernel = 3, double wstd = 0.02);
    Tensor forward(const Tensor& x);  // (c, d, h, w)
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, ParamList& out);
    void zero_init();

    Param w;  // (out_c, in_c, k, k, k)
    Param b;  // (out_c)
    int in_c, out_c, stride, kernel, pad;

private:
    Tensor x_;
};

class Conv2d {
public:
    Conv2d(int in_c, int out_c, int stride, Rng& rng, int kernel = 3, double wstd = 0.02);
    Tensor forward(const Tensor& x);  // (c, h, w)
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, ParamList& out);

    Param w;
    Param b;
    int in_c, out_c, stride, kernel, pad;

private:
    Tensor x_;
};

// Per-group standardization over (channels_in_group x spatial) with variance
// floor 1e-5, then optional per-channel affine.
class GroupNorm {
public:
    GroupNorm(int channels, int groups, bool affine);
    Tensor forward(const Tensor& x);  // (c, spatial...)
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, ParamList& out);

    static constexpr double kVarianceFloor = 1e-5;
    int channels, groups;
    bool affine;
    std::unique_ptr<Param> gamma, beta;  // (c) when affine

private:
    Tensor xhat_;
    std::vector<double> inv_std_;
    std::vector<int> in_shape_;
};

// Nearest-neighbor 2x upsampling in all three spatial dims.
class Upsample3d {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    std::vector<int> in_shape_;
};

// AdaGN(h, t, y) = y_s (t_s * GroupNorm(h) + t_b) + y_b, with (t_s, t_b) and
// (y_s, y_b) linear projections of the time embedding and semantic code.
// With t_dim == 0 the (t_s, t_b) pair is a directly learned per-channel
// affine; with y_dim == 0 the outer modulation is skipped.
class AdaGN {
public:
    AdaGN(int channels, int groups, int t_dim, int y_dim, Rng& rng);
    Tensor forward(const Tensor& h, const Tensor* t_emb, const Tensor* y);
    // Returns dh; accumulates *dt_emb / *dy when provided.
    Tensor backward(const Tensor& dout, Tensor* dt_emb, Tensor* dy);
    void collect(const std::string& prefix, ParamList& out);

    int channels, t_dim, y_dim;
    GroupNorm gn;
    std::unique_ptr<Linear> proj_t;            // t_dim -> 2c
    std::unique_ptr<Linear> proj_y;            // y_dim -> 2c
    std::unique_ptr<Param> own_scale, own_bias;  // used when t_dim == 0

private:
    Tensor gn_out_, inner_;       // cached normalized map and t-modulated map
    Tensor ts_, tb_, ys_, yb_;    // cached per-channel vectors
};

// alpha = softmax(E w + b); Q = sum_i alpha_i E_i.
class SoftAttention {
public:
    SoftAttention(int dim, Rng& rng);
    Tensor forward(const Tensor& E);  // (L, d) -> (d)
    Tensor backward(const Tensor& dQ);
    void collect(const std::string& prefix, ParamList& out);
    const Tensor& weights() const { return alpha_; }

    Param score_w;  // (d)
    Param score_b;  // (1)
    int dim;

private:
    Tensor E_, alpha_;
};

// Multi-head attention with K = V; query and key/value inputs may alias
// (self-attention), in which case the caller sums the two input grads.
class MultiHeadAttention {
public:
    MultiHeadAttention(int dim, int heads, Rng& rng);
    Tensor forward(const Tensor& Xq, const Tensor& Xkv);  // (Lq,d),(Lk,d) -> (Lq,d)
    // dXkv accumulated into second output
    std::pair<Tensor, Tensor> backward(const Tensor& dY);
    void collect(const std::string& prefix, ParamList& out);

    int dim, heads, head_dim;
    Linear wq, wk, wv, wo;

private:
    Tensor Q_, K_, V_;
    std::vector<Tensor> P_;  // per-head softmax rows (Lq, Lk)
};

// Residual spatial self-attention over flattened voxels at one level.
class SelfAttention3d {
public:
    SelfAttention3d(int channels, int groups, int heads, Rng& rng);
    Tensor forward(const Tensor& x);  // (c,d,h,w)
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, ParamList& out);

    int channels, heads;
    GroupNorm gn;
    MultiHeadAttention mha;

private:
    std::vector<int> in_shape_;
};

// Two 3x3x3 convs with AdaGN conditioning and a residual connection
// (1x1x1 projection when the channel count changes).
class ResBlock3d {
public:
    ResBlock3d(int in_c, int out_c, int groups, int t_dim, int y_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor* t_emb, const Tensor* y);
    Tensor backward(const Tensor& dy, Tensor* dt_emb, Tensor* dy_sem);
    void collect(const std::string& prefix, ParamList& out);

    int in_c, out_c;
    AdaGN n1, n2;
    SiLU s1, s2;
    Conv3d c1, c2;
    std::unique_ptr<Conv3d> skip;  // 1x1x1 when in_c != out_c

private:
    Tensor x_;
};

// Sinusoidal position/timestep features, dim must be even.
Tensor sinusoidal_embedding(double t, int dim);

// Sinusoid -> Linear -> SiLU -> Linear.
class TimeMlp {
public:
    TimeMlp(int dim, Rng& rng);
    Tensor forward(int t);
    void backward(const Tensor& d_emb);
    void collect(const std::string& prefix, ParamList& out);

    int dim;
    Linear l1, l2;
    SiLU act;
};

}  // namespace ldae::nets
