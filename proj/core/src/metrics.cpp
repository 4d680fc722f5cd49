#include "ldae/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ldae/common.hpp"

namespace ldae::evaluation {

namespace {
constexpr int kWin = 7;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
}  // namespace

double ssim3d(const Volume& a_in, const Volume& b_in) {
    if (!a_in.same_dims(b_in)) throw ShapeMismatch("ssim3d: dims differ");
    if (a_in.depth < kWin || a_in.height < kWin || a_in.width < kWin)
        throw ShapeMismatch("ssim3d: volume smaller than the 7^3 window");
    Volume a = clamp01(a_in), b = clamp01(b_in);

    const int n = kWin * kWin * kWin;
    const double inv_n = 1.0 / n;
    double total = 0.0;
    std::int64_t windows = 0;
    for (int d = 0; d + kWin <= a.depth; ++d)
        for (int h = 0; h + kWin <= a.height; ++h)
            for (int w = 0; w + kWin <= a.width; ++w) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dd = 0; dd < kWin; ++dd)
                    for (int hh = 0; hh < kWin; ++hh) {
                        std::int64_t base = a.index(d + dd, h + hh, w);
                        for (int ww = 0; ww < kWin; ++ww) {
                            double x = a.v[base + ww], y = b.v[base + ww];
                            sa += x;
                            sb += y;
                            saa += x * x;
                            sbb += y * y;
                            sab += x * y;
                        }
                    }
                double mu_a = sa * inv_n, mu_b = sb * inv_n;
                double var_a = saa * inv_n - mu_a * mu_a;
                double var_b = sbb * inv_n - mu_b * mu_b;
                double cov = sab * inv_n - mu_a * mu_b;
                double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
                double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
                total += num / den;
                ++windows;
            }
    return total / static_cast<double>(windows);
}

double mse(const Volume& a, const Volume& b) {
    if (!a.same_dims(b)) throw ShapeMismatch("mse: dims differ");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

}  // namespace ldae::evaluation
