// SPDX-License-Identifier: Apache-2.0
#include "reora/optim.hpp"

#include <cmath>

namespace reora {

Optimizer::Optimizer(OptConfig cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    t_.assign(params_.size(), 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i]->data.size(), 0.0);
        if (cfg_.kind == OptKind::adamw)
            v_[i].assign(params_[i]->data.size(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

void Optimizer::step() {
    last_elements_ = 0;

    if (cfg_.grad_clip > 0.0) {
        real sq = 0.0;
        for (const auto& p : params_) {
            if (!p->requires_grad || p->grad.empty()) continue;
            for (real g : p->grad) sq += g * g;
        }
        const real norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) {
            const real f = cfg_.grad_clip / norm;
            for (auto& p : params_) {
                if (!p->requires_grad || p->grad.empty()) continue;
                for (auto& g : p->grad) g *= f;
            }
        }
    }

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        last_elements_ += p->numel();
        const std::size_t n = p->data.size();
        if (cfg_.kind == OptKind::sgd) {
            for (std::size_t k = 0; k < n; ++k) p->data[k] -= cfg_.lr * p->grad[k];
            continue;
        }
        ++t_[i];
        const real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<real>(t_[i]));
        const real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<real>(t_[i]));
        for (std::size_t k = 0; k < n; ++k) {
            const real g = p->grad[k];
            m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
            v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
            const real mhat = m_[i][k] / bc1;
            const real vhat = v_[i][k] / bc2;
            p->data[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                     cfg_.weight_decay * p->data[k]);
        }
    }
}

}  // namespace reora
