#include "ldae/latentops.hpp"

#include <cmath>

#include "ldae/optim.hpp"

namespace ldae::latentops {

Tensor Models::encode_image(const Volume& x) const {
    if (!ae) return x.to_tensor();
    return compression::encode(*ae, scaler, x);
}

Volume Models::decode_image(const Tensor& z) const {
    if (!ae) return clamp01(Volume::from_tensor(z));
    return compression::decode(*ae, scaler, z);
}

std::vector<int> Models::latent_shape(const Volume& x) const {
    if (!ae) return {1, x.depth, x.height, x.width};
    const auto& spec = ae->spec();
    return {spec.c_lat, x.depth / spec.f, x.height / spec.f, x.width / spec.f};
}

const nets::DownState& SharedGuided::down(const Tensor& z, int t) {
    std::uint64_t key = fnv1a64(z.v.data(), z.v.size() * sizeof(double),
                                0xcbf29ce484222325ull ^ static_cast<std::uint64_t>(t));
    if (!valid_ || key != key_) {
        ds_ = eps_->forward_down(z, t);
        key_ = key;
        valid_ = true;
    }
    return ds_;
}

Tensor SharedGuided::predict(const Tensor& z, int t) { return eps_->forward_tail(down(z, t)); }

Tensor SharedGuided::estimate(const Tensor& z, const Tensor& y, int t) {
    return g_->forward_from_down(down(z, t), y);
}

DualCode encode_dual(const Models& m, const Volume& x0, int invert_steps) {
    DualCode code;
    code.y_sem = m.enc->forward(x0.to_tensor());
    Tensor z0 = m.encode_image(x0);
    SharedGuided pair(m.eps, m.g);
    int steps = invert_steps > 0 ? invert_steps : m.sched->T;
    code.z_T = diffusion::invert_loop(*m.sched, z0, steps, pair, &pair, &code.y_sem);
    return code;
}

Volume decode_dual(const Models& m, const DualCode& code, int n_steps) {
    SharedGuided pair(m.eps, m.g);
    Tensor z0 = diffusion::decode_loop(*m.sched, code.z_T, n_steps, pair, &pair, &code.y_sem);
    return m.decode_image(z0);
}

DirectionVector fit_direction(const std::vector<std::pair<Tensor, int>>& codes) {
    if (codes.empty()) throw DegenerateLabels("fit_direction: no codes");
    bool has0 = false, has1 = false;
    for (const auto& [y, label] : codes) (label ? has1 : has0) = true;
    if (!has0 || !has1) throw DegenerateLabels("fit_direction: both labels required");

    const int d = static_cast<int>(codes[0].first.numel());
    Tensor w({d});
    double b = 0.0;
    // Full-batch ridge-regularized logistic regression. The small L2 term
    // keeps the optimum finite on separable data, where the unregularized
    // norm diverges and the direction drifts toward a few margin points.
    Tensor mw({d}), vw({d});
    double mb = 0.0, vb = 0.0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, ridge = 1e-3;
    const int iters = 4000;
    for (int it = 1; it <= iters; ++it) {
        Tensor gw({d});
        double gb = 0.0;
        for (const auto& [y, label] : codes) {
            double z = w.dot(y) + b;
            double p = 1.0 / (1.0 + std::exp(-z));
            double r = p - static_cast<double>(label);
            gw.axpy_(r, y);
            gb += r;
        }
        double inv_n = 1.0 / static_cast<double>(codes.size());
        gw.scale_(inv_n);
        gw.axpy_(ridge, w);
        gb *= inv_n;
        double bc1 = 1.0 - std::pow(b1, it), bc2 = 1.0 - std::pow(b2, it);
        for (int i = 0; i < d; ++i) {
            mw.v[i] = b1 * mw.v[i] + (1 - b1) * gw.v[i];
            vw.v[i] = b2 * vw.v[i] + (1 - b2) * gw.v[i] * gw.v[i];
            w.v[i] -= lr * (mw.v[i] / bc1) / (std::sqrt(vw.v[i] / bc2) + eps);
        }
        mb = b1 * mb + (1 - b1) * gb;
        vb = b2 * vb + (1 - b2) * gb * gb;
        b -= lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
    }

    DirectionVector dir;
    double norm = w.norm();
    if (norm <= 0.0) throw DegenerateLabels("fit_direction: zero direction");
    w.scale_(1.0 / norm);
    dir.w = std::move(w);
    dir.b = b / norm;
    dir.positive_class_label = 1;
    return dir;
}

Volume manipulate(const Models& m, const DualCode& code, const DirectionVector& dir, double alpha,
                  int n_steps) {
    DualCode shifted;
    shifted.y_sem = code.y_sem;
    if (alpha != 0.0) shifted.y_sem.axpy_(alpha, dir.w);  // alpha 0 stays bit-identical
    shifted.z_T = code.z_T;
    return decode_dual(m, shifted, n_steps);
}

Tensor lerp(const Tensor& a, const Tensor& b, double t) {
    check_same_shape(a, b, "lerp");
    if (t < 0.0 || t > 1.0) throw OutOfRange("lerp: t outside [0,1]");
    Tensor out = a;
    out.scale_(1.0 - t);
    out.axpy_(t, b);
    return out;
}

Tensor slerp(const Tensor& a, const Tensor& b, double t) {
    check_same_shape(a, b, "slerp");
    if (t < 0.0 || t > 1.0) throw OutOfRange("slerp: t outside [0,1]");
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw ZeroVector("slerp: zero-norm input");
    double cosv = a.dot(b) / (na * nb);
    cosv = std::clamp(cosv, -1.0, 1.0);
    double theta = std::acos(cosv);
    if (theta < 1e-6) return lerp(a, b, t);  // sin underflow
    double s = std::sin(theta);
    Tensor out = a;
    out.scale_(std::sin((1.0 - t) * theta) / s);
    out.axpy_(std::sin(t * theta) / s, b);
    return out;
}

DualCode interpolate_codes(const DualCode& a, const DualCode& b, double t) {
    DualCode out;
    out.y_sem = lerp(a.y_sem, b.y_sem, t);
    out.z_T = slerp(a.z_T, b.z_T, t);
    return out;
}

Volume interpolate_pair(const Models& m, const Volume& x_start, const Volume& x_end, double t,
                        int n_steps, int invert_steps) {
    DualCode a = encode_dual(m, x_start, invert_steps);
    DualCode b = encode_dual(m, x_end, invert_steps);
    return decode_dual(m, interpolate_codes(a, b, t), n_steps);
}

}  // namespace ldae::latentops
