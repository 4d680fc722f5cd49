#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ldae/common.hpp"
#include "ldae/rng.hpp"

namespace ldae {

// Dense row-major tensor of doubles. Latents use (channels, depth, height,
// width); slice embeddings use (len, dim); vectors use (dim).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}
    Tensor(std::vector<int> s, double fill) : shape(std::move(s)), v(numel_of(shape), fill) {}

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }

    double& operator[](std::int64_t i) { return v[i]; }
    double operator[](std::int64_t i) const { return v[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    void add_(const Tensor& o) {
        for (std::int64_t i = 0; i < numel(); ++i) v[i] += o.v[i];
    }
    void sub_(const Tensor& o) {
        for (std::int64_t i = 0; i < numel(); ++i) v[i] -= o.v[i];
    }
    void scale_(double a) {
        for (auto& x : v) x *= a;
    }
    // this = this + a * o
    void axpy_(double a, const Tensor& o) {
        for (std::int64_t i = 0; i < numel(); ++i) v[i] += a * o.v[i];
    }

    double dot(const Tensor& o) const {
        double s = 0.0;
        for (std::int64_t i = 0; i < numel(); ++i) s += v[i] * o.v[i];
        return s;
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double sum() const { return std::accumulate(v.begin(), v.end(), 0.0); }
    double mean() const { return numel() ? sum() / static_cast<double>(numel()) : 0.0; }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

    static Tensor randn(std::vector<int> s, Rng& rng) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = rng.normal();
        return t;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(where) + ": " + a.shape_str() + " vs " + b.shape_str());
}

inline Tensor operator+(Tensor a, const Tensor& b) {
    check_same_shape(a, b, "operator+");
    a.add_(b);
    return a;
}
inline Tensor operator-(Tensor a, const Tensor& b) {
    check_same_shape(a, b, "operator-");
    a.sub_(b);
    return a;
}
inline Tensor operator*(Tensor a, double s) {
    a.scale_(s);
    return a;
}
inline Tensor operator*(double s, Tensor a) {
    a.scale_(s);
    return a;
}

inline double rms(const Tensor& t) {
    return t.numel() ? std::sqrt(t.dot(t) / static_cast<double>(t.numel())) : 0.0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace ldae
