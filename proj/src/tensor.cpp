// SPDX-License-Identifier: Apache-2.0
#include "reora/tensor.hpp"

#include <unordered_set>

namespace reora {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor make_tensor(std::vector<long> shape, bool requires_grad) {
    auto t = std::make_shared<TensorImpl>();
    const long n = numel_of(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

Tensor make_tensor(std::vector<long> shape, std::vector<real> data,
                   bool requires_grad) {
    if (numel_of(shape) != static_cast<long>(data.size()))
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto t = std::make_shared<TensorImpl>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

Tensor scalar_tensor(real v) { return make_tensor({1}, std::vector<real>{v}); }

Tensor gaussian_tensor(std::vector<long> shape, Rng& rng, real stddev,
                       bool requires_grad) {
    auto t = make_tensor(std::move(shape), requires_grad);
    for (auto& x : t->data) x = rng.normal(0.0, stddev);
    return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
    if (!loss) throw UsageError("backward: null tensor");
    if (loss->numel() != 1)
        throw UsageError("backward requires a scalar loss, got shape " +
                         shape_str(loss->shape));

    // Iterative post-order topological sort over the parent DAG.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* p = node->parents[idx].get();
            ++idx;
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are per-sweep scratch; only leaves accumulate across
    // repeated backward calls.
    for (TensorImpl* node : order) {
        if (node->backward_fn) {
            node->ensure_grad();
            node->zero_grad();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace reora
