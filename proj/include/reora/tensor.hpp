// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "reora/common.hpp"
#include "reora/rng.hpp"

namespace reora {

class TensorImpl;
using Tensor = std::shared_ptr<TensorImpl>;

/// Dense n-d array participating in a recorded reverse-mode graph.
/// Graph nodes hold their inputs (parents) alive via shared_ptr; the
/// backward closure of each node accumulates into parents' grads.
class TensorImpl {
public:
    std::vector<long> shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until first accumulation
    bool requires_grad = false;

    std::vector<Tensor> parents;
    std::function<void()> backward_fn;

    long numel() const { return static_cast<long>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), 0.0);
    }
};

Tensor make_tensor(std::vector<long> shape, bool requires_grad = false);
Tensor make_tensor(std::vector<long> shape, std::vector<real> data,
                   bool requires_grad = false);
Tensor scalar_tensor(real v);
Tensor gaussian_tensor(std::vector<long> shape, Rng& rng, real stddev,
                       bool requires_grad = false);

/// Whether ops currently record backward closures (thread-local).
bool grad_enabled();

/// RAII guard disabling graph recording (pure evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Reverse-mode sweep from a scalar loss. Accumulates additively into the
/// grad of every requires_grad ancestor; calling twice without zeroing
/// doubles the grads.
void backward(const Tensor& loss);

}  // namespace reora
