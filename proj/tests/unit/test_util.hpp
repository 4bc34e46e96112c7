// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "reora/tensor.hpp"

namespace reora::testing {

// Central finite differences over every element of `param`, compared against
// the analytic grad produced by rebuilding the loss and running backward.
// The loss builder must construct a fresh graph from the current parameter
// values on every call.
struct GradCheckResult {
    bool ok = true;
    std::string detail;
};

inline GradCheckResult check_grad_fd(const Tensor& param,
                                     const std::function<Tensor()>& make_loss,
                                     double h = 1e-5, double rtol = 1e-4,
                                     double atol = 1e-8) {
    param->zero_grad();
    Tensor loss = make_loss();
    backward(loss);
    std::vector<real> analytic = param->grad.empty()
                                     ? std::vector<real>(param->data.size(), 0.0)
                                     : param->grad;
    for (std::size_t i = 0; i < param->data.size(); ++i) {
        const real orig = param->data[i];
        param->data[i] = orig + h;
        const real fp = make_loss()->data[0];
        param->data[i] = orig - h;
        const real fm = make_loss()->data[0];
        param->data[i] = orig;
        const real fd = (fp - fm) / (2 * h);
        const real a = analytic[i];
        const real err = std::fabs(fd - a);
        const real bound = atol + rtol * std::max(std::fabs(fd), std::fabs(a));
        if (err > bound) {
            return {false, "element " + std::to_string(i) +
                               ": analytic=" + std::to_string(a) +
                               " fd=" + std::to_string(fd) +
                               " err=" + std::to_string(err)};
        }
    }
    return {};
}

}  // namespace reora::testing
