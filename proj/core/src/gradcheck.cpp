#include "ldae/gradcheck.hpp"

#include <cmath>

#include "ldae/common.hpp"
#include "ldae/layers.hpp"

namespace ldae::nets {

std::vector<CheckEntry> entries_of(ParamList& params) {
    std::vector<CheckEntry> entries;
    entries.reserve(params.size());
    for (auto& np : params) entries.push_back({np.name, &np.p->value, &np.p->grad});
    return entries;
}

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::function<void()>& grad_fn,
                           const std::vector<CheckEntry>& entries, double step) {
    grad_fn();
    std::vector<Tensor> analytic;
    analytic.reserve(entries.size());
    for (const auto& e : entries) {
        if (!e.grad->finite()) throw NonFinite("gradient of " + e.name);
        analytic.push_back(*e.grad);
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        Tensor& value = *entries[k].value;
        for (std::int64_t i = 0; i < value.numel(); ++i) {
            double orig = value.v[i];
            value.v[i] = orig + step;
            double lp = loss_fn();
            value.v[i] = orig - step;
            double lm = loss_fn();
            value.v[i] = orig;
            double fd = (lp - lm) / (2.0 * step);
            double a = analytic[k].v[i];
            double rel = std::abs(a - fd) / std::max(1e-6, std::abs(a) + std::abs(fd));
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = entries[k].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace ldae::nets
