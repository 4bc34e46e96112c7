// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "reora/tensor.hpp"

namespace reora {

enum class OptKind { sgd, adamw };

struct OptConfig {
    OptKind kind = OptKind::adamw;
    real lr = 2e-3;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real weight_decay = 0.0;
    real grad_clip = 0.0;  // global max-norm; 0 disables
};

/// Steps only params whose requires_grad flag is set at step time, so
/// freeze masks toggled between steps take effect without re-registration.
/// Per-param moment state and bias-correction counters survive freezes.
class Optimizer {
public:
    Optimizer(OptConfig cfg, std::vector<Tensor> params);

    void step();
    void zero_grad();

    /// Total elements of params updated by the most recent step().
    long last_step_param_elements() const { return last_elements_; }

private:
    OptConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<real>> m_, v_;
    std::vector<long> t_;
    long last_elements_ = 0;
};

}  // namespace reora
