#pragma once

#include <cmath>

#include "ldae/layers.hpp"

namespace ldae::nets {

// Adam with bias correction; moments decay 0.9 / 0.999, epsilon 1e-8.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void init(const ParamList& params) {
        m_.clear();
        v_.clear();
        for (const auto& np : params) {
            m_.emplace_back(np.p->value.shape);
            v_.emplace_back(np.p->value.shape);
        }
        step_ = 0;
    }

    // grad_scale folds in the 1/batch factor accumulated into the grads
    void step(ParamList& params, double grad_scale = 1.0) {
        ++step_;
        double bc1 = 1.0 - std::pow(b1_, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(b2_, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& w = params[i].p->value;
            const Tensor& g = params[i].p->grad;
            for (std::int64_t j = 0; j < w.numel(); ++j) {
                double gj = g.v[j] * grad_scale;
                m_[i].v[j] = b1_ * m_[i].v[j] + (1.0 - b1_) * gj;
                v_[i].v[j] = b2_ * v_[i].v[j] + (1.0 - b2_) * gj * gj;
                double mhat = m_[i].v[j] / bc1;
                double vhat = v_[i].v[j] / bc2;
                w.v[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double lr() const { return lr_; }
    std::int64_t steps_taken() const { return step_; }

    std::vector<Tensor> m_, v_;
    std::int64_t step_ = 0;

private:
    double lr_, b1_, b2_, eps_;
};

}  // namespace ldae::nets
