#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "adarec/graph.hpp"

namespace adarec {

// AdamW: Adam update plus decoupled weight decay.
class AdamW {
public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Var>& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& p : params) {
            if (!p->has_grad()) continue;
            auto& slot = slots_[p.get()];
            if (slot.m.data.empty()) {
                slot.m = Tensor::zeros(p->value.shape);
                slot.v = Tensor::zeros(p->value.shape);
            }
            for (size_t i = 0; i < p->value.data.size(); ++i) {
                double g = p->grad.data[i];
                slot.m.data[i] = beta1_ * slot.m.data[i] + (1.0 - beta1_) * g;
                slot.v.data[i] = beta2_ * slot.v.data[i] + (1.0 - beta2_) * g * g;
                double mhat = slot.m.data[i] / bc1;
                double vhat = slot.v.data[i] / bc2;
                p->value.data[i] -=
                    lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->value.data[i]);
            }
        }
    }

    double lr() const { return lr_; }

private:
    struct Slot {
        Tensor m, v;
    };
    double lr_, wd_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::unordered_map<Node*, Slot> slots_;
};

}  // namespace adarec
