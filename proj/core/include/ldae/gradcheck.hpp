#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ldae/layers.hpp"
#include "ldae/tensor.hpp"

namespace ldae::nets {

struct CheckEntry {
    std::string name;
    Tensor* value;
    Tensor* grad;  // analytic gradient written by grad_fn
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;
};

// Central finite differences (step 1e-5 by default) against analytic
// gradients for every listed tensor, including inputs when the caller adds
// them as entries. grad_fn must zero grads, run forward and backward; loss_fn
// must recompute the scalar loss from current values.
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::function<void()>& grad_fn,
                           const std::vector<CheckEntry>& entries, double step = 1e-5);

// Adapts a ParamList to check entries.
std::vector<CheckEntry> entries_of(ParamList& params);

}  // namespace ldae::nets
