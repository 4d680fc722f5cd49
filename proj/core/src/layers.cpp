#include "ldae/layers.hpp"

#include <cmath>

#include "ldae/common.hpp"

namespace ldae::nets {

void zero_grads(ParamList& params) {
    for (auto& np : params) np.p->zero_grad();
}

std::int64_t param_count(const ParamList& params) {
    std::int64_t n = 0;
    for (const auto& np : params) n += np.p->value.numel();
    return n;
}

namespace {

void init_normal(Tensor& t, Rng& rng, double std) {
    for (auto& x : t.v) x = std * rng.normal();
}

// ceil((p - k) / s) clamped at 0, and the matching upper bound, for mapping
// output positions to valid input positions.
inline int out_lo(int p, int k, int s) {
    int num = p - k;
    return num <= 0 ? 0 : (num + s - 1) / s;
}
inline int out_hi(int in_dim, int out_dim, int p, int k, int s) {
    int num = in_dim - 1 + p - k;
    if (num < 0) return -1;
    int hi = num / s;
    return hi < out_dim - 1 ? hi : out_dim - 1;
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(int in, int out, Rng& rng, double wstd)
    : w({out, in}), b({out}), in_dim(in), out_dim(out) {
    init_normal(w.value, rng, wstd);
}

Tensor Linear::forward(const Tensor& x) {
    x_ = x;
    bool rows = x.shape.size() == 2;
    int L = rows ? x.shape[0] : 1;
    int in = rows ? x.shape[1] : x.shape[0];
    if (in != in_dim) throw ShapeMismatch("Linear: input dim");
    Tensor y(rows ? std::vector<int>{L, out_dim} : std::vector<int>{out_dim});
    for (int r = 0; r < L; ++r) {
        const double* xr = x.v.data() + static_cast<std::int64_t>(r) * in_dim;
        double* yr = y.v.data() + static_cast<std::int64_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            const double* wrow = w.value.v.data() + static_cast<std::int64_t>(o) * in_dim;
            double acc = b.value.v[o];
            for (int i = 0; i < in_dim; ++i) acc += wrow[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    bool rows = x_.shape.size() == 2;
    int L = rows ? x_.shape[0] : 1;
    Tensor dx(x_.shape);
    for (int r = 0; r < L; ++r) {
        const double* xr = x_.v.data() + static_cast<std::int64_t>(r) * in_dim;
        const double* dyr = dy.v.data() + static_cast<std::int64_t>(r) * out_dim;
        double* dxr = dx.v.data() + static_cast<std::int64_t>(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) {
            double g = dyr[o];
            b.grad.v[o] += g;
            double* dwrow = w.grad.v.data() + static_cast<std::int64_t>(o) * in_dim;
            const double* wrow = w.value.v.data() + static_cast<std::int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) {
                dwrow[i] += g * xr[i];
                dxr[i] += g * wrow[i];
            }
        }
    }
    return dx;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
}

// ---------------------------------------------------------------- SiLU

Tensor SiLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y = x;
    for (auto& v : y.v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        v = v * s;
    }
    return y;
}

Tensor SiLU::backward(const Tensor& dy) {
    Tensor dx = dy;
    for (std::int64_t i = 0; i < dx.numel(); ++i) {
        double x = x_.v[i];
        double s = 1.0 / (1.0 + std::exp(-x));
        dx.v[i] *= s * (1.0 + x * (1.0 - s));
    }
    return dx;
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(int in_c_, int out_c_, int stride_, Rng& rng, int kernel_, double wstd)
    : w({out_c_, in_c_, kernel_, kernel_, kernel_}),
      b({out_c_}),
      in_c(in_c_),
      out_c(out_c_),
      stride(stride_),
      kernel(kernel_),
      pad(kernel_ / 2) {
    init_normal(w.value, rng, wstd);
}

void Conv3d::zero_init() {
    w.value.fill(0.0);
    b.value.fill(0.0);
}

namespace {

// copies (c,d,h,w) into a zero-padded (c, d+2p, h+2p, w+2p) buffer
void pad_volume(const Tensor& x, int pad, std::vector<double>& out, int& PD, int& PH, int& PW) {
    const int C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    PD = D + 2 * pad;
    PH = H + 2 * pad;
    PW = W + 2 * pad;
    out.assign(static_cast<std::size_t>(C) * PD * PH * PW, 0.0);
    for (int c = 0; c < C; ++c)
        for (int d = 0; d < D; ++d)
            for (int h = 0; h < H; ++h) {
                const double* src = x.v.data() + ((static_cast<std::int64_t>(c) * D + d) * H + h) * W;
                double* dst = out.data() +
                              ((static_cast<std::int64_t>(c) * PD + d + pad) * PH + h + pad) * PW +
                              pad;
                std::copy(src, src + W, dst);
            }
}

}  // namespace

Tensor Conv3d::forward(const Tensor& x) {
    if (x.shape.size() != 4 || x.shape[0] != in_c)
        throw ShapeMismatch("Conv3d: expected (" + std::to_string(in_c) + ",d,h,w), got " + x.shape_str());
    x_ = x;
    const int D = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int OD = (D + 2 * pad - kernel) / stride + 1;
    const int OH = (H + 2 * pad - kernel) / stride + 1;
    const int OW = (W + 2 * pad - kernel) / stride + 1;
    Tensor y({out_c, OD, OH, OW});
    const std::int64_t ysp = static_cast<std::int64_t>(OD) * OH * OW;

    int PD, PH, PW;
    std::vector<double> xp;
    pad_volume(x, pad, xp, PD, PH, PW);
    const std::int64_t psp = static_cast<std::int64_t>(PD) * PH * PW;

    for (int oc = 0; oc < out_c; ++oc) {
        double bias = b.value.v[oc];
        double* yo = y.v.data() + oc * ysp;
        for (std::int64_t i = 0; i < ysp; ++i) yo[i] = bias;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xi = xp.data() + ic * psp;
            const double* wk = w.value.v.data() +
                               (static_cast<std::int64_t>(oc) * in_c + ic) * kernel * kernel * kernel;
            for (int od = 0; od < OD; ++od)
                for (int oh = 0; oh < OH; ++oh) {
                    double* yrow = yo + (static_cast<std::int64_t>(od) * OH + oh) * OW;
                    for (int kd = 0; kd < kernel; ++kd)
                        for (int kh = 0; kh < kernel; ++kh) {
                            const double* xrow =
                                xi + ((static_cast<std::int64_t>(od) * stride + kd) * PH +
                                      oh * stride + kh) *
                                         PW;
                            const double* wrow = wk + (kd * kernel + kh) * kernel;
                            if (kernel == 3 && stride == 1) {
                                double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                                for (int ow = 0; ow < OW; ++ow)
                                    yrow[ow] += w0 * xrow[ow] + w1 * xrow[ow + 1] + w2 * xrow[ow + 2];
                            } else if (kernel == 3) {
                                double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                                for (int ow = 0; ow < OW; ++ow) {
                                    const double* xs = xrow + ow * stride;
                                    yrow[ow] += w0 * xs[0] + w1 * xs[1] + w2 * xs[2];
                                }
                            } else {
                                for (int kw = 0; kw < kernel; ++kw) {
                                    double wv = wrow[kw];
                                    for (int ow = 0; ow < OW; ++ow)
                                        yrow[ow] += wv * xrow[ow * stride + kw];
                                }
                            }
                        }
                }
        }
    }
    return y;
}

Tensor Conv3d::backward(const Tensor& dy) {
    const int D = x_.shape[1], H = x_.shape[2], W = x_.shape[3];
    const int OD = dy.shape[1], OH = dy.shape[2], OW = dy.shape[3];
    const std::int64_t ysp = static_cast<std::int64_t>(OD) * OH * OW;

    int PD, PH, PW;
    std::vector<double> xp;
    pad_volume(x_, pad, xp, PD, PH, PW);
    const std::int64_t psp = static_cast<std::int64_t>(PD) * PH * PW;
    std::vector<double> dxp(xp.size(), 0.0);

    for (int oc = 0; oc < out_c; ++oc) {
        const double* go = dy.v.data() + oc * ysp;
        double acc = 0.0;
        for (std::int64_t i = 0; i < ysp; ++i) acc += go[i];
        b.grad.v[oc] += acc;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xi = xp.data() + ic * psp;
            double* dxi = dxp.data() + ic * psp;
            const std::int64_t wbase =
                (static_cast<std::int64_t>(oc) * in_c + ic) * kernel * kernel * kernel;
            for (int kd = 0; kd < kernel; ++kd)
                for (int kh = 0; kh < kernel; ++kh) {
                    const std::int64_t wrow = wbase + (kd * kernel + kh) * kernel;
                    double wg[3] = {0.0, 0.0, 0.0};
                    if (kernel == 3) {
                        const double w0 = w.value.v[wrow], w1 = w.value.v[wrow + 1],
                                     w2 = w.value.v[wrow + 2];
                        for (int od = 0; od < OD; ++od)
                            for (int oh = 0; oh < OH; ++oh) {
                                const double* grow =
                                    go + (static_cast<std::int64_t>(od) * OH + oh) * OW;
                                const std::int64_t base =
                                    ((static_cast<std::int64_t>(od) * stride + kd) * PH +
                                     oh * stride + kh) *
                                    PW;
                                const double* xrow = xi + base;
                                double* dxrow = dxi + base;
                                if (stride == 1) {
                                    for (int ow = 0; ow < OW; ++ow) {
                                        double g = grow[ow];
                                        wg[0] += g * xrow[ow];
                                        wg[1] += g * xrow[ow + 1];
                                        wg[2] += g * xrow[ow + 2];
                                        dxrow[ow] += w0 * g;
                                        dxrow[ow + 1] += w1 * g;
                                        dxrow[ow + 2] += w2 * g;
                                    }
                                } else {
                                    for (int ow = 0; ow < OW; ++ow) {
                                        double g = grow[ow];
                                        const double* xs = xrow + ow * stride;
                                        double* dxs = dxrow + ow * stride;
                                        wg[0] += g * xs[0];
                                        wg[1] += g * xs[1];
                                        wg[2] += g * xs[2];
                                        dxs[0] += w0 * g;
                                        dxs[1] += w1 * g;
                                        dxs[2] += w2 * g;
                                    }
                                }
                            }
                        w.grad.v[wrow] += wg[0];
                        w.grad.v[wrow + 1] += wg[1];
                        w.grad.v[wrow + 2] += wg[2];
                    } else {
                        for (int kw = 0; kw < kernel; ++kw) {
                            const double wv = w.value.v[wrow + kw];
                            double wacc = 0.0;
                            for (int od = 0; od < OD; ++od)
                                for (int oh = 0; oh < OH; ++oh) {
                                    const double* grow =
                                        go + (static_cast<std::int64_t>(od) * OH + oh) * OW;
                                    const std::int64_t base =
                                        ((static_cast<std::int64_t>(od) * stride + kd) * PH +
                                         oh * stride + kh) *
                                            PW +
                                        kw;
                                    const double* xrow = xi + base;
                                    double* dxrow = dxi + base;
                                    for (int ow = 0; ow < OW; ++ow) {
                                        wacc += grow[ow] * xrow[ow * stride];
                                        dxrow[ow * stride] += wv * grow[ow];
                                    }
                                }
                            w.grad.v[wrow + kw] += wacc;
                        }
                    }
                }
        }
    }

    // unpad
    Tensor dx(x_.shape);
    for (int c = 0; c < in_c; ++c)
        for (int d = 0; d < D; ++d)
            for (int h = 0; h < H; ++h) {
                const double* src =
                    dxp.data() + ((static_cast<std::int64_t>(c) * PD + d + pad) * PH + h + pad) * PW +
                    pad;
                double* dst = dx.v.data() + ((static_cast<std::int64_t>(c) * D + d) * H + h) * W;
                std::copy(src, src + W, dst);
            }
    return dx;
}

void Conv3d::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c_, int out_c_, int stride_, Rng& rng, int kernel_, double wstd)
    : w({out_c_, in_c_, kernel_, kernel_}),
      b({out_c_}),
      in_c(in_c_),
      out_c(out_c_),
      stride(stride_),
      kernel(kernel_),
      pad(kernel_ / 2) {
    init_normal(w.value, rng, wstd);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.shape.size() != 3 || x.shape[0] != in_c)
        throw ShapeMismatch("Conv2d: expected (" + std::to_string(in_c) + ",h,w), got " + x.shape_str());
    x_ = x;
    const int H = x.shape[1], W = x.shape[2];
    const int OH = (H + 2 * pad - kernel) / stride + 1;
    const int OW = (W + 2 * pad - kernel) / stride + 1;
    Tensor y({out_c, OH, OW});
    const std::int64_t ysp = static_cast<std::int64_t>(OH) * OW;
    const std::int64_t xsp = static_cast<std::int64_t>(H) * W;
    for (int oc = 0; oc < out_c; ++oc) {
        double* yo = y.v.data() + oc * ysp;
        for (std::int64_t i = 0; i < ysp; ++i) yo[i] = b.value.v[oc];
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xi = x.v.data() + ic * xsp;
            const double* wk =
                w.value.v.data() + (static_cast<std::int64_t>(oc) * in_c + ic) * kernel * kernel;
            for (int kh = 0; kh < kernel; ++kh) {
                int ohl = out_lo(pad, kh, stride), ohh = out_hi(H, OH, pad, kh, stride);
                for (int kw = 0; kw < kernel; ++kw) {
                    int owl = out_lo(pad, kw, stride), owh = out_hi(W, OW, pad, kw, stride);
                    double wv = wk[kh * kernel + kw];
                    for (int oh = ohl; oh <= ohh; ++oh) {
                        int ih = oh * stride + kh - pad;
                        double* yrow = yo + static_cast<std::int64_t>(oh) * OW;
                        const double* xrow = xi + static_cast<std::int64_t>(ih) * W + kw - pad;
                        for (int ow = owl; ow <= owh; ++ow) yrow[ow] += wv * xrow[ow * stride];
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int H = x_.shape[1], W = x_.shape[2];
    const int OH = dy.shape[1], OW = dy.shape[2];
    Tensor dx(x_.shape);
    const std::int64_t ysp = static_cast<std::int64_t>(OH) * OW;
    const std::int64_t xsp = static_cast<std::int64_t>(H) * W;
    for (int oc = 0; oc < out_c; ++oc) {
        const double* go = dy.v.data() + oc * ysp;
        double acc = 0.0;
        for (std::int64_t i = 0; i < ysp; ++i) acc += go[i];
        b.grad.v[oc] += acc;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* xi = x_.v.data() + ic * xsp;
            double* dxi = dx.v.data() + ic * xsp;
            const std::int64_t wbase = (static_cast<std::int64_t>(oc) * in_c + ic) * kernel * kernel;
            for (int kh = 0; kh < kernel; ++kh) {
                int ohl = out_lo(pad, kh, stride), ohh = out_hi(H, OH, pad, kh, stride);
                for (int kw = 0; kw < kernel; ++kw) {
                    int owl = out_lo(pad, kw, stride), owh = out_hi(W, OW, pad, kw, stride);
                    const std::int64_t widx = wbase + kh * kernel + kw;
                    const double wv = w.value.v[widx];
                    double wacc = 0.0;
                    for (int oh = ohl; oh <= ohh; ++oh) {
                        int ih = oh * stride + kh - pad;
                        const double* grow = go + static_cast<std::int64_t>(oh) * OW;
                        const double* xrow = xi + static_cast<std::int64_t>(ih) * W + kw - pad;
                        double* dxrow = dxi + static_cast<std::int64_t>(ih) * W + kw - pad;
                        for (int ow = owl; ow <= owh; ++ow) {
                            wacc += grow[ow] * xrow[ow * stride];
                            dxrow[ow * stride] += wv * grow[ow];
                        }
                    }
                    w.grad.v[widx] += wacc;
                }
            }
        }
    }
    return dx;
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
}

// ------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(int channels_, int groups_, bool affine_)
    : channels(channels_), groups(groups_), affine(affine_) {
    if (channels % groups != 0)
        throw IndivisibleGroups(std::to_string(channels) + " channels, " + std::to_string(groups) +
                                " groups");
    if (affine) {
        gamma = std::make_unique<Param>(std::vector<int>{channels});
        beta = std::make_unique<Param>(std::vector<int>{channels});
        gamma->value.fill(1.0);
    }
}

Tensor GroupNorm::forward(const Tensor& x) {
    if (x.shape.empty() || x.shape[0] != channels) throw ShapeMismatch("GroupNorm: channel dim");
    in_shape_ = x.shape;
    const std::int64_t sp = x.numel() / channels;
    const int cpg = channels / groups;
    const std::int64_t gs = cpg * sp;
    xhat_ = Tensor(x.shape);
    inv_std_.assign(groups, 0.0);
    Tensor y(x.shape);
    for (int g = 0; g < groups; ++g) {
        const double* xg = x.v.data() + static_cast<std::int64_t>(g) * gs;
        double mean = 0.0;
        for (std::int64_t i = 0; i < gs; ++i) mean += xg[i];
        mean /= static_cast<double>(gs);
        double var = 0.0;
        for (std::int64_t i = 0; i < gs; ++i) {
            double d = xg[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(gs);
        double istd = 1.0 / std::sqrt(var + kVarianceFloor);
        inv_std_[g] = istd;
        double* xh = xhat_.v.data() + static_cast<std::int64_t>(g) * gs;
        for (std::int64_t i = 0; i < gs; ++i) xh[i] = (xg[i] - mean) * istd;
    }
    if (affine) {
        for (int c = 0; c < channels; ++c) {
            double gch = gamma->value.v[c], bch = beta->value.v[c];
            const double* xh = xhat_.v.data() + c * sp;
            double* yc = y.v.data() + c * sp;
            for (std::int64_t i = 0; i < sp; ++i) yc[i] = gch * xh[i] + bch;
        }
    } else {
        y.v = xhat_.v;
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
    const std::int64_t sp = dy.numel() / channels;
    const int cpg = channels / groups;
    const std::int64_t gs = cpg * sp;
    Tensor dxhat(in_shape_);
    if (affine) {
        for (int c = 0; c < channels; ++c) {
            const double* dyc = dy.v.data() + c * sp;
            const double* xh = xhat_.v.data() + c * sp;
            double dg = 0.0, db = 0.0;
            double gch = gamma->value.v[c];
            double* dxc = dxhat.v.data() + c * sp;
            for (std::int64_t i = 0; i < sp; ++i) {
                dg += dyc[i] * xh[i];
                db += dyc[i];
                dxc[i] = dyc[i] * gch;
            }
            gamma->grad.v[c] += dg;
            beta->grad.v[c] += db;
        }
    } else {
        dxhat.v = dy.v;
    }
    Tensor dx(in_shape_);
    for (int g = 0; g < groups; ++g) {
        const double* dxh = dxhat.v.data() + static_cast<std::int64_t>(g) * gs;
        const double* xh = xhat_.v.data() + static_cast<std::int64_t>(g) * gs;
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t i = 0; i < gs; ++i) {
            m1 += dxh[i];
            m2 += dxh[i] * xh[i];
        }
        m1 /= static_cast<double>(gs);
        m2 /= static_cast<double>(gs);
        double istd = inv_std_[g];
        double* dxg = dx.v.data() + static_cast<std::int64_t>(g) * gs;
        for (std::int64_t i = 0; i < gs; ++i) dxg[i] = istd * (dxh[i] - m1 - xh[i] * m2);
    }
    return dx;
}

void GroupNorm::collect(const std::string& prefix, ParamList& out) {
    if (affine) {
        out.push_back({prefix + ".scale", gamma.get()});
        out.push_back({prefix + ".bias", beta.get()});
    }
}

// ------------------------------------------------------------ Upsample3d

Tensor Upsample3d::forward(const Tensor& x) {
    in_shape_ = x.shape;
    const int C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    Tensor y({C, 2 * D, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int d = 0; d < 2 * D; ++d)
            for (int h = 0; h < 2 * H; ++h) {
                const double* xrow =
                    x.v.data() + ((static_cast<std::int64_t>(c) * D + d / 2) * H + h / 2) * W;
                double* yrow =
                    y.v.data() + ((static_cast<std::int64_t>(c) * 2 * D + d) * 2 * H + h) * 2 * W;
                for (int w = 0; w < 2 * W; ++w) yrow[w] = xrow[w / 2];
            }
    return y;
}

Tensor Upsample3d::backward(const Tensor& dy) {
    const int C = in_shape_[0], D = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor dx(in_shape_);
    for (int c = 0; c < C; ++c)
        for (int d = 0; d < 2 * D; ++d)
            for (int h = 0; h < 2 * H; ++h) {
                double* dxrow =
                    dx.v.data() + ((static_cast<std::int64_t>(c) * D + d / 2) * H + h / 2) * W;
                const double* gyrow =
                    dy.v.data() + ((static_cast<std::int64_t>(c) * 2 * D + d) * 2 * H + h) * 2 * W;
                for (int w = 0; w < 2 * W; ++w) dxrow[w / 2] += gyrow[w];
            }
    return dx;
}

// ----------------------------------------------------------------- AdaGN

AdaGN::AdaGN(int channels_, int groups, int t_dim_, int y_dim_, Rng& rng)
    : channels(channels_), t_dim(t_dim_), y_dim(y_dim_), gn(channels_, groups, false) {
    if (t_dim > 0) {
        proj_t = std::make_unique<Linear>(t_dim, 2 * channels, rng);
        for (int c = 0; c < channels; ++c) proj_t->b.value.v[c] = 1.0;  // scale half starts at 1
    } else {
        own_scale = std::make_unique<Param>(std::vector<int>{channels});
        own_bias = std::make_unique<Param>(std::vector<int>{channels});
        own_scale->value.fill(1.0);
    }
    if (y_dim > 0) {
        proj_y = std::make_unique<Linear>(y_dim, 2 * channels, rng);
        for (int c = 0; c < channels; ++c) proj_y->b.value.v[c] = 1.0;
    }
}

Tensor AdaGN::forward(const Tensor& h, const Tensor* t_emb, const Tensor* y) {
    gn_out_ = gn.forward(h);
    const std::int64_t sp = gn_out_.numel() / channels;
    if (t_dim > 0) {
        if (!t_emb) throw InvalidParams("AdaGN: missing time embedding");
        Tensor v = proj_t->forward(*t_emb);
        ts_ = Tensor({channels});
        tb_ = Tensor({channels});
        for (int c = 0; c < channels; ++c) {
            ts_.v[c] = v.v[c];
            tb_.v[c] = v.v[channels + c];
        }
    } else {
        ts_ = own_scale->value;
        tb_ = own_bias->value;
    }
    inner_ = Tensor(gn_out_.shape);
    for (int c = 0; c < channels; ++c) {
        const double* g = gn_out_.v.data() + c * sp;
        double* o = inner_.v.data() + c * sp;
        double s = ts_.v[c], b = tb_.v[c];
        for (std::int64_t i = 0; i < sp; ++i) o[i] = s * g[i] + b;
    }
    if (y_dim == 0) return inner_;
    if (!y) throw InvalidParams("AdaGN: missing semantic code");
    Tensor vy = proj_y->forward(*y);
    ys_ = Tensor({channels});
    yb_ = Tensor({channels});
    for (int c = 0; c < channels; ++c) {
        ys_.v[c] = vy.v[c];
        yb_.v[c] = vy.v[channels + c];
    }
    Tensor out(inner_.shape);
    for (int c = 0; c < channels; ++c) {
        const double* in = inner_.v.data() + c * sp;
        double* o = out.v.data() + c * sp;
        double s = ys_.v[c], b = yb_.v[c];
        for (std::int64_t i = 0; i < sp; ++i) o[i] = s * in[i] + b;
    }
    return out;
}

Tensor AdaGN::backward(const Tensor& dout, Tensor* dt_emb, Tensor* dy) {
    const std::int64_t sp = dout.numel() / channels;
    Tensor dinner = dout;
    if (y_dim > 0) {
        Tensor dvy({2 * channels});
        for (int c = 0; c < channels; ++c) {
            const double* g = dout.v.data() + c * sp;
            const double* in = inner_.v.data() + c * sp;
            double dys = 0.0, dyb = 0.0;
            double* din = dinner.v.data() + c * sp;
            double s = ys_.v[c];
            for (std::int64_t i = 0; i < sp; ++i) {
                dys += g[i] * in[i];
                dyb += g[i];
                din[i] = g[i] * s;
            }
            dvy.v[c] = dys;
            dvy.v[channels + c] = dyb;
        }
        Tensor dy_in = proj_y->backward(dvy);
        if (dy) dy->add_(dy_in);
    }
    Tensor dgn(gn_out_.shape);
    Tensor dts({channels}), dtb({channels});
    for (int c = 0; c < channels; ++c) {
        const double* din = dinner.v.data() + c * sp;
        const double* g = gn_out_.v.data() + c * sp;
        double* dg = dgn.v.data() + c * sp;
        double s = ts_.v[c];
        double as = 0.0, ab = 0.0;
        for (std::int64_t i = 0; i < sp; ++i) {
            as += din[i] * g[i];
            ab += din[i];
            dg[i] = din[i] * s;
        }
        dts.v[c] = as;
        dtb.v[c] = ab;
    }
    if (t_dim > 0) {
        Tensor dvt({2 * channels});
        for (int c = 0; c < channels; ++c) {
            dvt.v[c] = dts.v[c];
            dvt.v[channels + c] = dtb.v[c];
        }
        Tensor dt_in = proj_t->backward(dvt);
        if (dt_emb) dt_emb->add_(dt_in);
    } else {
        own_scale->grad.add_(dts);
        own_bias->grad.add_(dtb);
    }
    return gn.backward(dgn);
}

void AdaGN::collect(const std::string& prefix, ParamList& out) {
    if (t_dim > 0)
        proj_t->collect(prefix + ".proj_t", out);
    else {
        out.push_back({prefix + ".scale", own_scale.get()});
        out.push_back({prefix + ".bias", own_bias.get()});
    }
    if (y_dim > 0) proj_y->collect(prefix + ".proj_y", out);
}

// --------------------------------------------------------- SoftAttention

SoftAttention::SoftAttention(int dim_, Rng& rng) : score_w({dim_}), score_b({1}), dim(dim_) {
    init_normal(score_w.value, rng, 0.02);
}

Tensor SoftAttention::forward(const Tensor& E) {
    if (E.shape.size() != 2 || E.shape[1] != dim) throw ShapeMismatch("SoftAttention: (L,d) expected");
    const int L = E.shape[0];
    if (L < 1) throw EmptySequence("SoftAttention: empty sequence");
    E_ = E;
    std::vector<double> s(L);
    double smax = -1e300;
    for (int i = 0; i < L; ++i) {
        const double* e = E.v.data() + static_cast<std::int64_t>(i) * dim;
        double acc = score_b.value.v[0];
        for (int j = 0; j < dim; ++j) acc += e[j] * score_w.value.v[j];
        s[i] = acc;
        smax = std::max(smax, acc);
    }
    alpha_ = Tensor({L});
    double z = 0.0;
    for (int i = 0; i < L; ++i) {
        alpha_.v[i] = std::exp(s[i] - smax);
        z += alpha_.v[i];
    }
    for (int i = 0; i < L; ++i) alpha_.v[i] /= z;
    Tensor Q({dim});
    for (int i = 0; i < L; ++i) {
        const double* e = E.v.data() + static_cast<std::int64_t>(i) * dim;
        double a = alpha_.v[i];
        for (int j = 0; j < dim; ++j) Q.v[j] += a * e[j];
    }
    return Q;
}

Tensor SoftAttention::backward(const Tensor& dQ) {
    const int L = E_.shape[0];
    Tensor dE(E_.shape);
    std::vector<double> dalpha(L, 0.0);
    for (int i = 0; i < L; ++i) {
        const double* e = E_.v.data() + static_cast<std::int64_t>(i) * dim;
        double* de = dE.v.data() + static_cast<std::int64_t>(i) * dim;
        double a = alpha_.v[i];
        double acc = 0.0;
        for (int j = 0; j < dim; ++j) {
            acc += e[j] * dQ.v[j];
            de[j] += a * dQ.v[j];
        }
        dalpha[i] = acc;
    }
    double inner = 0.0;
    for (int i = 0; i < L; ++i) inner += alpha_.v[i] * dalpha[i];
    for (int i = 0; i < L; ++i) {
        double ds = alpha_.v[i] * (dalpha[i] - inner);
        const double* e = E_.v.data() + static_cast<std::int64_t>(i) * dim;
        double* de = dE.v.data() + static_cast<std::int64_t>(i) * dim;
        for (int j = 0; j < dim; ++j) {
            score_w.grad.v[j] += ds * e[j];
            de[j] += ds * score_w.value.v[j];
        }
        score_b.grad.v[0] += ds;
    }
    return dE;
}

void SoftAttention::collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".score_w", &score_w});
    out.push_back({prefix + ".score_b", &score_b});
}

// --------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(int dim_, int heads_, Rng& rng)
    : dim(dim_),
      heads(heads_),
      head_dim(dim_ / heads_),
      wq(dim_, dim_, rng),
      wk(dim_, dim_, rng),
      wv(dim_, dim_, rng),
      wo(dim_, dim_, rng) {
    if (dim % heads != 0)
        throw IndivisibleHeads(std::to_string(dim) + " dim, " + std::to_string(heads) + " heads");
}

Tensor MultiHeadAttention::forward(const Tensor& Xq, const Tensor& Xkv) {
    if (Xq.shape.size() != 2 || Xkv.shape.size() != 2 || Xq.shape[1] != dim || Xkv.shape[1] != dim)
        throw ShapeMismatch("MultiHeadAttention: (L,d) inputs expected");
    const int Lq = Xq.shape[0], Lk = Xkv.shape[0];
    Q_ = wq.forward(Xq);
    K_ = wk.forward(Xkv);
    V_ = wv.forward(Xkv);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor O({Lq, dim});
    P_.assign(heads, Tensor());
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * head_dim;
        Tensor P({Lq, Lk});
        for (int i = 0; i < Lq; ++i) {
            double* prow = P.v.data() + static_cast<std::int64_t>(i) * Lk;
            const double* qrow = Q_.v.data() + static_cast<std::int64_t>(i) * dim + c0;
            double mx = -1e300;
            for (int j = 0; j < Lk; ++j) {
                const double* krow = K_.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                double acc = 0.0;
                for (int m = 0; m < head_dim; ++m) acc += qrow[m] * krow[m];
                prow[j] = acc * scale;
                mx = std::max(mx, prow[j]);
            }
            double z = 0.0;
            for (int j = 0; j < Lk; ++j) {
                prow[j] = std::exp(prow[j] - mx);
                z += prow[j];
            }
            for (int j = 0; j < Lk; ++j) prow[j] /= z;
            double* orow = O.v.data() + static_cast<std::int64_t>(i) * dim + c0;
            for (int j = 0; j < Lk; ++j) {
                const double* vrow = V_.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                double p = prow[j];
                for (int m = 0; m < head_dim; ++m) orow[m] += p * vrow[m];
            }
        }
        P_[h] = std::move(P);
    }
    return wo.forward(O);
}

std::pair<Tensor, Tensor> MultiHeadAttention::backward(const Tensor& dY) {
    Tensor dO = wo.backward(dY);
    const int Lq = Q_.shape[0], Lk = K_.shape[0];
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor dQ({Lq, dim}), dK({Lk, dim}), dV({Lk, dim});
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * head_dim;
        const Tensor& P = P_[h];
        for (int i = 0; i < Lq; ++i) {
            const double* prow = P.v.data() + static_cast<std::int64_t>(i) * Lk;
            const double* dorow = dO.v.data() + static_cast<std::int64_t>(i) * dim + c0;
            // dP and dV
            std::vector<double> dprow(Lk, 0.0);
            for (int j = 0; j < Lk; ++j) {
                const double* vrow = V_.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                double* dvrow = dV.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                double acc = 0.0;
                double p = prow[j];
                for (int m = 0; m < head_dim; ++m) {
                    acc += dorow[m] * vrow[m];
                    dvrow[m] += p * dorow[m];
                }
                dprow[j] = acc;
            }
            double inner = 0.0;
            for (int j = 0; j < Lk; ++j) inner += prow[j] * dprow[j];
            const double* qrow = Q_.v.data() + static_cast<std::int64_t>(i) * dim + c0;
            double* dqrow = dQ.v.data() + static_cast<std::int64_t>(i) * dim + c0;
            for (int j = 0; j < Lk; ++j) {
                double ds = prow[j] * (dprow[j] - inner) * scale;
                const double* krow = K_.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                double* dkrow = dK.v.data() + static_cast<std::int64_t>(j) * dim + c0;
                for (int m = 0; m < head_dim; ++m) {
                    dqrow[m] += ds * krow[m];
                    dkrow[m] += ds * qrow[m];
                }
            }
        }
    }
    Tensor dXv = wv.backward(dV);
    Tensor dXk = wk.backward(dK);
    Tensor dXq = wq.backward(dQ);
    dXk.add_(dXv);
    return {std::move(dXq), std::move(dXk)};
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

// -------------------------------------------------------- SelfAttention3d

SelfAttention3d::SelfAttention3d(int channels_, int groups, int heads_, Rng& rng)
    : channels(channels_), heads(heads_), gn(channels_, groups, true), mha(channels_, heads_, rng) {}

namespace {

Tensor spatial_to_tokens(const Tensor& x) {
    const int C = x.shape[0];
    const std::int64_t L = x.numel() / C;
    Tensor t({static_cast<int>(L), C});
    for (int c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < L; ++i) t.v[i * C + c] = x.v[c * L + i];
    return t;
}

Tensor tokens_to_spatial(const Tensor& t, const std::vector<int>& shape) {
    const int C = shape[0];
    Tensor x(shape);
    const std::int64_t L = x.numel() / C;
    for (int c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < L; ++i) x.v[c * L + i] = t.v[i * C + c];
    return x;
}

}  // namespace

Tensor SelfAttention3d::forward(const Tensor& x) {
    in_shape_ = x.shape;
    Tensor n = gn.forward(x);
    Tensor tokens = spatial_to_tokens(n);
    Tensor out_tokens = mha.forward(tokens, tokens);
    Tensor a = tokens_to_spatial(out_tokens, x.shape);
    a.add_(x);
    return a;
}

Tensor SelfAttention3d::backward(const Tensor& dy) {
    Tensor dtok = spatial_to_tokens(dy);
    auto [dq, dkv] = mha.backward(dtok);
    dq.add_(dkv);
    Tensor dn = tokens_to_spatial(dq, in_shape_);
    Tensor dx = gn.backward(dn);
    dx.add_(dy);
    return dx;
}

void SelfAttention3d::collect(const std::string& prefix, ParamList& out) {
    gn.collect(prefix + ".norm", out);
    mha.collect(prefix + ".attn", out);
}

// ------------------------------------------------------------ ResBlock3d

ResBlock3d::ResBlock3d(int in_c_, int out_c_, int groups, int t_dim, int y_dim, Rng& rng)
    : in_c(in_c_),
      out_c(out_c_),
      n1(in_c_, groups, t_dim, y_dim, rng),
      n2(out_c_, groups, t_dim, y_dim, rng),
      c1(in_c_, out_c_, 1, rng),
      c2(out_c_, out_c_, 1, rng) {
    if (in_c != out_c) skip = std::make_unique<Conv3d>(in_c, out_c, 1, rng, 1);
}

Tensor ResBlock3d::forward(const Tensor& x, const Tensor* t_emb, const Tensor* y) {
    x_ = x;
    Tensor h = n1.forward(x, t_emb, y);
    h = s1.forward(h);
    h = c1.forward(h);
    h = n2.forward(h, t_emb, y);
    h = s2.forward(h);
    h = c2.forward(h);
    Tensor sk = skip ? skip->forward(x) : x;
    h.add_(sk);
    return h;
}

Tensor ResBlock3d::backward(const Tensor& dy, Tensor* dt_emb, Tensor* dy_sem) {
    Tensor dh = c2.backward(dy);
    dh = s2.backward(dh);
    dh = n2.backward(dh, dt_emb, dy_sem);
    dh = c1.backward(dh);
    dh = s1.backward(dh);
    dh = n1.backward(dh, dt_emb, dy_sem);
    Tensor dsk = skip ? skip->backward(dy) : dy;
    dh.add_(dsk);
    return dh;
}

void ResBlock3d::collect(const std::string& prefix, ParamList& out) {
    n1.collect(prefix + ".norm1", out);
    c1.collect(prefix + ".conv1", out);
    n2.collect(prefix + ".norm2", out);
    c2.collect(prefix + ".conv2", out);
    if (skip) skip->collect(prefix + ".skip", out);
}

// --------------------------------------------------------------- TimeMlp

Tensor sinusoidal_embedding(double t, int dim) {
    const int half = dim / 2;
    Tensor e({dim});
    for (int k = 0; k < half; ++k) {
        double freq = half > 1 ? std::exp(-std::log(10000.0) * k / (half - 1)) : 1.0;
        e.v[k] = std::sin(t * freq);
        e.v[half + k] = std::cos(t * freq);
    }
    return e;
}

TimeMlp::TimeMlp(int dim_, Rng& rng) : dim(dim_), l1(dim_, dim_, rng), l2(dim_, dim_, rng) {}

Tensor TimeMlp::forward(int t) {
    Tensor e = sinusoidal_embedding(static_cast<double>(t), dim);
    Tensor h = l1.forward(e);
    h = act.forward(h);
    return l2.forward(h);
}

void TimeMlp::backward(const Tensor& d_emb) {
    Tensor dh = l2.backward(d_emb);
    dh = act.backward(dh);
    l1.backward(dh);
}

void TimeMlp::collect(const std::string& prefix, ParamList& out) {
    l1.collect(prefix + ".l1", out);
    l2.collect(prefix + ".l2", out);
}

}  // namespace ldae::nets
