#include "ldae/networks.hpp"

#include <numeric>

#include "ldae/common.hpp"

namespace ldae::nets {

namespace {

int norm_groups(int groups, int channels) { return std::gcd(groups, channels); }

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    std::vector<int> shape = a.shape;
    shape[0] += b.shape[0];
    Tensor out(shape);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.numel());
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& cat, int c_first) {
    std::vector<int> sa = cat.shape, sb = cat.shape;
    sa[0] = c_first;
    sb[0] = cat.shape[0] - c_first;
    Tensor a(sa), b(sb);
    std::copy(cat.v.begin(), cat.v.begin() + a.numel(), a.v.begin());
    std::copy(cat.v.begin() + a.numel(), cat.v.end(), b.v.begin());
    return {std::move(a), std::move(b)};
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
    Tensor out(std::move(shape));
    if (out.numel() != t.numel()) throw ShapeMismatch("reshape: element count");
    out.v = t.v;
    return out;
}

}  // namespace

void NetworkSpec::validate() const {
    if (channels.empty()) throw SpecInvalid("channels empty");
    for (int c : channels)
        if (c <= 0) throw SpecInvalid("non-positive channel width");
    if (t_dim < 0 || t_dim % 2 != 0) throw SpecInvalid("t_dim must be even");
    if (d_sem <= 0) throw SpecInvalid("d_sem must be positive");
    if (attn_heads <= 0) throw SpecInvalid("attn_heads must be positive");
    if (f < 1 || (f & (f - 1)) != 0) throw SpecInvalid("f must be a power of two");
    if (c_lat <= 0) throw SpecInvalid("c_lat must be positive");
}

// ------------------------------------------------------------------ UNet3d

UNet3d::UNet3d(const NetworkSpec& spec, std::uint64_t seed)
    : UNet3d(spec, Rng(derive_seed(seed, 11))) {}

UNet3d::UNet3d(const NetworkSpec& spec, Rng rng)
    : spec_(spec),
      time_mlp(spec.t_dim, rng),
      in_conv(spec.in_channels, spec.channels[0], 1, rng) {
    spec_.validate();
    const auto& ch = spec_.channels;
    const int L = static_cast<int>(ch.size());
    for (int l = 0; l < L; ++l) {
        int in_c = l == 0 ? ch[0] : ch[l - 1];
        down_res.push_back(std::make_unique<ResBlock3d>(in_c, ch[l], norm_groups(spec.groups, ch[l]),
                                                        spec.t_dim, 0, rng));
    }
    for (int l = 0; l + 1 < L; ++l)
        downsamplers.push_back(std::make_unique<Conv3d>(ch[l], ch[l], 2, rng));
    int deep = ch.back();
    mid1 = std::make_unique<ResBlock3d>(deep, deep, norm_groups(spec.groups, deep), spec.t_dim, 0, rng);
    if (spec.attn_deepest)
        mid_attn = std::make_unique<SelfAttention3d>(deep, norm_groups(spec.groups, deep),
                                                     norm_groups(spec.attn_heads, deep), rng);
    mid2 = std::make_unique<ResBlock3d>(deep, deep, norm_groups(spec.groups, deep), spec.t_dim, 0, rng);
    up_res.resize(L);
    for (int l = L - 1; l >= 0; --l) {
        int out_c = ch[l > 0 ? l - 1 : 0];
        up_res[l] = std::make_unique<ResBlock3d>(2 * ch[l], out_c, norm_groups(spec.groups, out_c),
                                                 spec.t_dim, 0, rng);
    }
    for (int l = 0; l + 1 < L; ++l) {
        auto stage = std::make_unique<UpStage>();
        stage->conv = std::make_unique<Conv3d>(ch[l], ch[l], 1, rng);
        ups.push_back(std::move(stage));
    }
    out_norm = std::make_unique<AdaGN>(ch[0], norm_groups(spec.groups, ch[0]), spec.t_dim, 0, rng);
    out_conv = std::make_unique<Conv3d>(ch[0], spec.in_channels, 1, rng);
}

ParamList UNet3d::params() {
    ParamList out;
    time_mlp.collect("time_mlp", out);
    in_conv.collect("in_conv", out);
    for (std::size_t l = 0; l < down_res.size(); ++l)
        down_res[l]->collect("down" + std::to_string(l), out);
    for (std::size_t l = 0; l < downsamplers.size(); ++l)
        downsamplers[l]->collect("downsample" + std::to_string(l), out);
    mid1->collect("mid1", out);
    if (mid_attn) mid_attn->collect("mid_attn", out);
    mid2->collect("mid2", out);
    for (std::size_t l = 0; l < up_res.size(); ++l) up_res[l]->collect("up" + std::to_string(l), out);
    for (std::size_t l = 0; l < ups.size(); ++l)
        ups[l]->conv->collect("upsample" + std::to_string(l), out);
    out_norm->collect("out_norm", out);
    out_conv->collect("out_conv", out);
    return out;
}

const DownState& UNet3d::forward_down(const Tensor& z, int t) {
    const auto& ch = spec_.channels;
    const int L = static_cast<int>(ch.size());
    ds_.t = t;
    ds_.t_emb = time_mlp.forward(t);
    ds_.skips.assign(L, Tensor());
    Tensor h = in_conv.forward(z);
    for (int l = 0; l < L; ++l) {
        if (l > 0) h = downsamplers[l - 1]->forward(h);
        h = down_res[l]->forward(h, &ds_.t_emb, nullptr);
        ds_.skips[l] = h;
    }
    return ds_;
}

Tensor UNet3d::forward_tail(const DownState& ds) {
    const int L = static_cast<int>(spec_.channels.size());
    Tensor h = mid1->forward(ds.skips[L - 1], &ds.t_emb, nullptr);
    if (mid_attn) h = mid_attn->forward(h);
    h = mid2->forward(h, &ds.t_emb, nullptr);
    for (int l = L - 1; l >= 0; --l) {
        h = up_res[l]->forward(concat_channels(h, ds.skips[l]), &ds.t_emb, nullptr);
        if (l > 0) {
            h = ups[l - 1]->up.forward(h);
            h = ups[l - 1]->conv->forward(h);
        }
    }
    h = out_norm->forward(h, &ds.t_emb, nullptr);
    h = out_act.forward(h);
    return out_conv->forward(h);
}

Tensor UNet3d::forward(const Tensor& z, int t) { return forward_tail(forward_down(z, t)); }

Tensor UNet3d::backward(const Tensor& deps) {
    const auto& ch = spec_.channels;
    const int L = static_cast<int>(ch.size());
    Tensor dt_emb({spec_.t_dim});
    dskips_.assign(L, Tensor());

    Tensor d = out_conv->backward(deps);
    d = out_act.backward(d);
    d = out_norm->backward(d, &dt_emb, nullptr);
    for (int l = 0; l < L; ++l) {
        if (l > 0) {
            d = ups[l - 1]->conv->backward(d);
            d = ups[l - 1]->up.backward(d);
        }
        Tensor dcat = up_res[l]->backward(d, &dt_emb, nullptr);
        auto [dh, dskip] = split_channels(dcat, ch[l]);
        dskips_[l] = std::move(dskip);
        d = std::move(dh);
    }
    d = mid2->backward(d, &dt_emb, nullptr);
    if (mid_attn) d = mid_attn->backward(d);
    d = mid1->backward(d, &dt_emb, nullptr);
    dskips_[L - 1].add_(d);

    Tensor dcur = std::move(dskips_[L - 1]);
    for (int l = L - 1; l >= 1; --l) {
        dcur = down_res[l]->backward(dcur, &dt_emb, nullptr);
        dcur = downsamplers[l - 1]->backward(dcur);
        dcur.add_(dskips_[l - 1]);
    }
    dcur = down_res[0]->backward(dcur, &dt_emb, nullptr);
    Tensor dz = in_conv.backward(dcur);
    time_mlp.backward(dt_emb);
    return dz;
}

std::unique_ptr<UNet3d> build_unet(const NetworkSpec& spec, std::uint64_t seed) {
    return std::make_unique<UNet3d>(spec, seed);
}

// ----------------------------------------------------------- GradEstimator

GradEstimator::GradEstimator(UNet3d* shared_, std::uint64_t seed) : shared(shared_) {
    const NetworkSpec& spec = shared->spec();
    const auto& ch = spec.channels;
    levels_ = static_cast<int>(ch.size());
    d_sem_ = spec.d_sem;
    Rng rng(derive_seed(seed, 21));
    int deep = ch.back();
    mid1 = std::make_unique<ResBlock3d>(deep, deep, norm_groups(spec.groups, deep), spec.t_dim, d_sem_, rng);
    if (spec.attn_deepest)
        mid_attn = std::make_unique<SelfAttention3d>(deep, norm_groups(spec.groups, deep),
                                                     norm_groups(spec.attn_heads, deep), rng);
    mid2 = std::make_unique<ResBlock3d>(deep, deep, norm_groups(spec.groups, deep), spec.t_dim, d_sem_, rng);
    up_res.resize(levels_);
    for (int l = levels_ - 1; l >= 0; --l) {
        int out_c = ch[l > 0 ? l - 1 : 0];
        up_res[l] = std::make_unique<ResBlock3d>(2 * ch[l], out_c, norm_groups(spec.groups, out_c),
                                                 spec.t_dim, d_sem_, rng);
    }
    for (int l = 0; l + 1 < levels_; ++l) {
        auto stage = std::make_unique<UpStage>();
        stage->conv = std::make_unique<Conv3d>(ch[l], ch[l], 1, rng);
        ups.push_back(std::move(stage));
    }
    out_norm = std::make_unique<AdaGN>(ch[0], norm_groups(spec.groups, ch[0]), spec.t_dim, d_sem_, rng);
    out_conv = std::make_unique<Conv3d>(ch[0], spec.in_channels, 1, rng);
    out_conv->zero_init();
}

ParamList GradEstimator::params() {
    ParamList out;
    mid1->collect("g.mid1", out);
    if (mid_attn) mid_attn->collect("g.mid_attn", out);
    mid2->collect("g.mid2", out);
    for (std::size_t l = 0; l < up_res.size(); ++l)
        up_res[l]->collect("g.up" + std::to_string(l), out);
    for (std::size_t l = 0; l < ups.size(); ++l)
        ups[l]->conv->collect("g.upsample" + std::to_string(l), out);
    out_norm->collect("g.out_norm", out);
    out_conv->collect("g.out_conv", out);
    return out;
}

Tensor GradEstimator::forward_from_down(const DownState& ds, const Tensor& y_sem) {
    const int L = levels_;
    Tensor h = mid1->forward(ds.skips[L - 1], &ds.t_emb, &y_sem);
    if (mid_attn) h = mid_attn->forward(h);
    h = mid2->forward(h, &ds.t_emb, &y_sem);
    for (int l = L - 1; l >= 0; --l) {
        h = up_res[l]->forward(concat_channels(h, ds.skips[l]), &ds.t_emb, &y_sem);
        if (l > 0) {
            h = ups[l - 1]->up.forward(h);
            h = ups[l - 1]->conv->forward(h);
        }
    }
    h = out_norm->forward(h, &ds.t_emb, &y_sem);
    h = out_act.forward(h);
    return out_conv->forward(h);
}

Tensor GradEstimator::forward(const Tensor& z, int t, const Tensor& y_sem) {
    return forward_from_down(shared->forward_down(z, t), y_sem);
}

Tensor GradEstimator::backward(const Tensor& dg) {
    const int L = levels_;
    const auto& ch = shared->spec().channels;
    Tensor dy({d_sem_});

    Tensor d = out_conv->backward(dg);
    d = out_act.backward(d);
    d = out_norm->backward(d, nullptr, &dy);
    for (int l = 0; l < L; ++l) {
        if (l > 0) {
            d = ups[l - 1]->conv->backward(d);
            d = ups[l - 1]->up.backward(d);
        }
        Tensor dcat = up_res[l]->backward(d, nullptr, &dy);
        auto [dh, dskip] = split_channels(dcat, ch[l]);
        (void)dskip;  // frozen shared path
        d = std::move(dh);
    }
    d = mid2->backward(d, nullptr, &dy);
    if (mid_attn) d = mid_attn->backward(d);
    mid1->backward(d, nullptr, &dy);
    return dy;
}

// --------------------------------------------------------- SemanticEncoder

SemanticEncoder::SemanticEncoder(const NetworkSpec& spec, std::uint64_t seed)
    : SemanticEncoder(spec, Rng(derive_seed(seed, 31))) {}

SemanticEncoder::SemanticEncoder(const NetworkSpec& spec, Rng rng) : spec_(spec) {
    spec_.validate();
    int prev = 1;
    int h = spec.in_h, w = spec.in_w;
    for (int c : spec.tower_channels) {
        tconvs.push_back(std::make_unique<Conv2d>(prev, c, 2, rng));
        tnorms.push_back(std::make_unique<GroupNorm>(c, norm_groups(spec.groups, c), true));
        tacts.push_back(std::make_unique<SiLU>());
        prev = c;
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    tower_out_shape_ = {prev, h, w};
    flat_dim_ = prev * h * w;
    embed = std::make_unique<Linear>(flat_dim_, spec.d_sem, rng);
    soft = std::make_unique<SoftAttention>(spec.d_sem, rng);
    cross = std::make_unique<MultiHeadAttention>(spec.d_sem, spec.attn_heads, rng);
}

Tensor SemanticEncoder::tower_forward(const Tensor& slice) {
    Tensor h = slice;
    for (std::size_t i = 0; i < tconvs.size(); ++i) {
        h = tconvs[i]->forward(h);
        h = tnorms[i]->forward(h);
        h = tacts[i]->forward(h);
    }
    Tensor flat = reshape(h, {static_cast<int>(h.numel())});
    return embed->forward(flat);
}

void SemanticEncoder::tower_backward(const Tensor& de) {
    Tensor dflat = embed->backward(de);
    Tensor d = reshape(dflat, tower_out_shape_);
    for (int i = static_cast<int>(tconvs.size()) - 1; i >= 0; --i) {
        d = tacts[i]->backward(d);
        d = tnorms[i]->backward(d);
        d = tconvs[i]->backward(d);
    }
}

Tensor SemanticEncoder::forward(const Tensor& vol) {
    if (vol.shape.size() != 4 || vol.shape[0] != 1)
        throw ShapeMismatch("SemanticEncoder: (1,D,H,W) expected, got " + vol.shape_str());
    if (vol.shape[2] != spec_.in_h || vol.shape[3] != spec_.in_w)
        throw ShapeMismatch("SemanticEncoder: plane size differs from spec");
    vol_ = vol;
    const int D = vol.shape[1], H = vol.shape[2], W = vol.shape[3];
    E_ = Tensor({D, spec_.d_sem});
    for (int i = 0; i < D; ++i) {
        Tensor slice({1, H, W});
        std::copy(vol.v.begin() + static_cast<std::int64_t>(i) * H * W,
                  vol.v.begin() + static_cast<std::int64_t>(i + 1) * H * W, slice.v.begin());
        Tensor e = tower_forward(slice);
        Tensor pos = sinusoidal_embedding(static_cast<double>(i), spec_.d_sem);
        e.add_(pos);
        std::copy(e.v.begin(), e.v.end(), E_.v.begin() + static_cast<std::int64_t>(i) * spec_.d_sem);
    }
    Tensor q = soft->forward(E_);
    soft_weights_ = &soft->weights();
    Tensor qrow = reshape(q, {1, spec_.d_sem});
    Tensor y2 = cross->forward(qrow, E_);
    return reshape(y2, {spec_.d_sem});
}

void SemanticEncoder::backward(const Tensor& dy) {
    const int D = vol_.shape[1], H = vol_.shape[2], W = vol_.shape[3];
    Tensor dY2 = reshape(dy, {1, spec_.d_sem});
    auto [dqrow, dE_kv] = cross->backward(dY2);
    Tensor dq = reshape(dqrow, {spec_.d_sem});
    Tensor dE = soft->backward(dq);
    dE.add_(dE_kv);
    for (int i = 0; i < D; ++i) {
        Tensor slice({1, H, W});
        std::copy(vol_.v.begin() + static_cast<std::int64_t>(i) * H * W,
                  vol_.v.begin() + static_cast<std::int64_t>(i + 1) * H * W, slice.v.begin());
        tower_forward(slice);  // restore tower caches for this slice
        Tensor de({spec_.d_sem});
        std::copy(dE.v.begin() + static_cast<std::int64_t>(i) * spec_.d_sem,
                  dE.v.begin() + static_cast<std::int64_t>(i + 1) * spec_.d_sem, de.v.begin());
        tower_backward(de);
    }
}

ParamList SemanticEncoder::params() {
    ParamList out;
    for (std::size_t i = 0; i < tconvs.size(); ++i) {
        tconvs[i]->collect("enc.tower" + std::to_string(i) + ".conv", out);
        tnorms[i]->collect("enc.tower" + std::to_string(i) + ".norm", out);
    }
    embed->collect("enc.embed", out);
    soft->collect("enc.soft", out);
    cross->collect("enc.cross", out);
    return out;
}

// ----------------------------------------------------------- CompressionAE

CompressionAE::CompressionAE(const NetworkSpec& spec, std::uint64_t seed)
    : CompressionAE(spec, Rng(derive_seed(seed, 41))) {}

CompressionAE::CompressionAE(const NetworkSpec& spec, Rng rng)
    : spec_(spec), e_in(spec.in_channels, spec.comp_channels[0], 1, rng) {
    spec_.validate();
    const auto& ch = spec_.comp_channels;  // one width per level, shallow to deep
    n_down_ = 0;
    for (int f = spec_.f; f > 1; f /= 2) ++n_down_;
    if (static_cast<int>(ch.size()) != n_down_ + 1)
        throw SpecInvalid("comp_channels size must equal log2(f) + 1");

    auto g = [&](int c) { return norm_groups(spec_.groups, c); };
    e_rb_in = std::make_unique<ResBlock3d>(ch[0], ch[0], g(ch[0]), 0, 0, rng);
    for (int i = 0; i < n_down_; ++i) {
        e_down.push_back(std::make_unique<Conv3d>(ch[i], ch[i + 1], 2, rng));
        e_rb.push_back(std::make_unique<ResBlock3d>(ch[i + 1], ch[i + 1], g(ch[i + 1]), 0, 0, rng));
    }
    e_norm = std::make_unique<GroupNorm>(ch.back(), g(ch.back()), true);
    e_out = std::make_unique<Conv3d>(ch.back(), 2 * spec_.c_lat, 1, rng);

    d_in = std::make_unique<Conv3d>(spec_.c_lat, ch.back(), 1, rng);
    d_rb_in = std::make_unique<ResBlock3d>(ch.back(), ch.back(), g(ch.back()), 0, 0, rng);
    for (int i = 0; i < n_down_; ++i) {
        int src = ch[n_down_ - i];
        int dst = ch[n_down_ - i - 1];
        auto stage = std::make_unique<UpStage>();
        stage->conv = std::make_unique<Conv3d>(src, dst, 1, rng);
        d_up.push_back(std::move(stage));
        d_rb.push_back(std::make_unique<ResBlock3d>(dst, dst, g(dst), 0, 0, rng));
    }
    d_norm = std::make_unique<GroupNorm>(ch[0], g(ch[0]), true);
    d_out = std::make_unique<Conv3d>(ch[0], spec_.in_channels, 1, rng);
}

std::pair<Tensor, Tensor> CompressionAE::encode_dist(const Tensor& x) {
    Tensor h = e_in.forward(x);
    h = e_rb_in->forward(h, nullptr, nullptr);
    for (int i = 0; i < n_down_; ++i) {
        h = e_down[i]->forward(h);
        h = e_rb[i]->forward(h, nullptr, nullptr);
    }
    h = e_norm->forward(h);
    h = e_act.forward(h);
    h = e_out->forward(h);
    return split_channels(h, spec_.c_lat);
}

void CompressionAE::encode_backward(const Tensor& dmean, const Tensor& dlogvar) {
    Tensor d = concat_channels(dmean, dlogvar);
    d = e_out->backward(d);
    d = e_act.backward(d);
    d = e_norm->backward(d);
    for (int i = n_down_ - 1; i >= 0; --i) {
        d = e_rb[i]->backward(d, nullptr, nullptr);
        d = e_down[i]->backward(d);
    }
    d = e_rb_in->backward(d, nullptr, nullptr);
    e_in.backward(d);
}

Tensor CompressionAE::decode_raw(const Tensor& z) {
    Tensor h = d_in->forward(z);
    h = d_rb_in->forward(h, nullptr, nullptr);
    for (int i = 0; i < n_down_; ++i) {
        h = d_up[i]->up.forward(h);
        h = d_up[i]->conv->forward(h);
        h = d_rb[i]->forward(h, nullptr, nullptr);
    }
    h = d_norm->forward(h);
    h = d_act.forward(h);
    return d_out->forward(h);
}

Tensor CompressionAE::decode_backward(const Tensor& dxr) {
    Tensor d = d_out->backward(dxr);
    d = d_act.backward(d);
    d = d_norm->backward(d);
    for (int i = n_down_ - 1; i >= 0; --i) {
        d = d_rb[i]->backward(d, nullptr, nullptr);
        d = d_up[i]->conv->backward(d);
        d = d_up[i]->up.backward(d);
    }
    d = d_rb_in->backward(d, nullptr, nullptr);
    return d_in->backward(d);
}

ParamList CompressionAE::params() {
    ParamList out;
    e_in.collect("ae.e_in", out);
    e_rb_in->collect("ae.e_rb_in", out);
    for (int i = 0; i < n_down_; ++i) {
        e_down[i]->collect("ae.e_down" + std::to_string(i), out);
        e_rb[i]->collect("ae.e_rb" + std::to_string(i), out);
    }
    e_norm->collect("ae.e_norm", out);
    e_out->collect("ae.e_out", out);
    d_in->collect("ae.d_in", out);
    d_rb_in->collect("ae.d_rb_in", out);
    for (int i = 0; i < n_down_; ++i) {
        d_up[i]->conv->collect("ae.d_up" + std::to_string(i), out);
        d_rb[i]->collect("ae.d_rb" + std::to_string(i), out);
    }
    d_norm->collect("ae.d_norm", out);
    d_out->collect("ae.d_out", out);
    return out;
}

// ------------------------------------------------------------------- Ema

Ema::Ema(const ParamList& params) {
    shadow.reserve(params.size());
    for (const auto& np : params) shadow.push_back(np.p->value);
}

void Ema::update(const ParamList& params, double decay) {
    if (decay < 0.0 || decay > 1.0) throw InvalidRange("ema decay outside [0,1]");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& s = shadow[i];
        const Tensor& c = params[i].p->value;
        for (std::int64_t j = 0; j < s.numel(); ++j)
            s.v[j] = decay * s.v[j] + (1.0 - decay) * c.v[j];
    }
}

void Ema::apply(ParamList& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].p->value = shadow[i];
}

std::uint64_t hash_params(ParamList params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& np : params) {
        h = fnv1a64(np.name.data(), np.name.size(), h);
        h = fnv1a64(np.p->value.v.data(), np.p->value.v.size() * sizeof(double), h);
    }
    return h;
}

}  // namespace ldae::nets
