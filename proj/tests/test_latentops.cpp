#include <cmath>

#include "doctest.h"
#include "ldae/latentops.hpp"

using namespace ldae;
using namespace ldae::latentops;

namespace {

Tensor randn(std::vector<int> shape, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng);
}

Tensor vec(std::vector<double> v) {
    Tensor t({static_cast<int>(v.size())});
    t.v = std::move(v);
    return t;
}

double angle_deg(const Tensor& a, const Tensor& b) {
    double c = a.dot(b) / (a.norm() * b.norm());
    return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("lerp endpoints, symmetry, and plug-in") {
    Tensor a = randn({5}, 1), b = randn({5}, 2);
    CHECK(max_abs_diff(lerp(a, b, 0.0), a) == 0.0);
    CHECK(max_abs_diff(lerp(a, b, 1.0), b) == 0.0);

    Tensor na = a;
    na.scale_(-1.0);
    Tensor mid = lerp(a, na, 0.5);
    CHECK(mid.norm() < 1e-15);

    Tensor p = lerp(vec({1, 0}), vec({0, 1}), 0.25);
    CHECK(p.v[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p.v[1] == doctest::Approx(0.25).epsilon(1e-15));

    CHECK_THROWS_AS(lerp(a, b, -0.1), OutOfRange);
    CHECK_THROWS_AS(lerp(a, b, 1.1), OutOfRange);
}

TEST_CASE("slerp endpoints, orthogonal midpoint, norm preservation") {
    Tensor a = vec({1, 0, 0, 0});
    Tensor b = vec({0, 1, 0, 0});
    CHECK(max_abs_diff(slerp(a, b, 0.0), a) < 1e-12);
    CHECK(max_abs_diff(slerp(a, b, 1.0), b) < 1e-12);

    Tensor mid = slerp(a, b, 0.5);
    CHECK(mid.v[0] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(mid.v[1] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(mid.norm() == doctest::Approx(1.0).epsilon(1e-12));

    // great-circle property on equal norms
    Rng rng(3);
    Tensor u = Tensor::randn({64}, rng), w = Tensor::randn({64}, rng);
    double r = 2.5;
    u.scale_(r / u.norm());
    w.scale_(r / w.norm());
    for (double t : {0.1, 0.25, 0.5, 0.75, 0.9})
        CHECK(std::abs(slerp(u, w, t).norm() - r) / r < 1e-6);

    // tiny angle falls back to lerp
    Tensor almost = u;
    almost.v[0] += 1e-9;
    Tensor f = slerp(u, almost, 0.5);
    Tensor l = lerp(u, almost, 0.5);
    CHECK(max_abs_diff(f, l) < 1e-12);

    Tensor zero({64});
    CHECK_THROWS_AS(slerp(zero, u, 0.5), ZeroVector);
    CHECK_THROWS_AS(slerp(u, w, 1.5), OutOfRange);
}

TEST_CASE("interpolated codes mix lerp and slerp") {
    DualCode a{randn({6}, 5), randn({1, 2, 2, 2}, 6)};
    DualCode b{randn({6}, 7), randn({1, 2, 2, 2}, 8)};
    DualCode c = interpolate_codes(a, b, 0.0);
    CHECK(max_abs_diff(c.y_sem, a.y_sem) == 0.0);
    CHECK(max_abs_diff(c.z_T, a.z_T) < 1e-12);
    DualCode m = interpolate_codes(a, b, 0.5);
    CHECK(max_abs_diff(m.y_sem, lerp(a.y_sem, b.y_sem, 0.5)) == 0.0);
    CHECK(max_abs_diff(m.z_T, slerp(a.z_T, b.z_T, 0.5)) == 0.0);
}

TEST_CASE("fit_direction recovers the separating normal on isotropic clusters") {
    Rng rng(11);
    std::vector<std::pair<Tensor, int>> codes;
    Tensor mu0 = vec({-1.0, 0.5});
    Tensor mu1 = vec({1.5, -0.5});
    for (int i = 0; i < 200; ++i) {
        Tensor x0({2}), x1({2});
        for (int j = 0; j < 2; ++j) {
            x0.v[j] = mu0.v[j] + 0.15 * rng.normal();
            x1.v[j] = mu1.v[j] + 0.15 * rng.normal();
        }
        codes.emplace_back(x0, 0);
        codes.emplace_back(x1, 1);
    }
    DirectionVector dir = fit_direction(codes);
    CHECK(dir.w.norm() == doctest::Approx(1.0).epsilon(1e-9));

    Tensor normal = mu1 - mu0;
    CHECK(angle_deg(dir.w, normal) < 5.0);

    // training accuracy is perfect on separable data
    int correct = 0;
    for (const auto& [x, label] : codes) {
        int pred = dir.w.dot(x) + dir.b > 0 ? 1 : 0;
        correct += pred == label;
    }
    CHECK(correct == static_cast<int>(codes.size()));

    // scale invariance of the direction
    std::vector<std::pair<Tensor, int>> scaled;
    for (const auto& [x, label] : codes) {
        Tensor sx = x;
        sx.scale_(7.5);
        scaled.emplace_back(sx, label);
    }
    DirectionVector dir2 = fit_direction(scaled);
    CHECK(angle_deg(dir.w, dir2.w) < 1.0);
}

TEST_CASE("fit_direction degenerate inputs") {
    std::vector<std::pair<Tensor, int>> same;
    same.emplace_back(vec({1, 2}), 1);
    same.emplace_back(vec({2, 1}), 1);
    CHECK_THROWS_AS(fit_direction(same), DegenerateLabels);

    // duplicate points with opposite labels: converges, no crash
    std::vector<std::pair<Tensor, int>> dup;
    dup.emplace_back(vec({0.5, 0.5}), 0);
    dup.emplace_back(vec({0.5, 0.5}), 1);
    dup.emplace_back(vec({-1.0, 0.0}), 0);
    dup.emplace_back(vec({1.0, 0.0}), 1);
    DirectionVector dir = fit_direction(dup);
    int correct = 0;
    for (int i = 0; i < 2; ++i) {
        int pred = dir.w.dot(dup[i].first) + dir.b > 0 ? 1 : 0;
        correct += pred == dup[i].second;
    }
    CHECK(correct <= 1);  // at most half of the contradictory pair
}
