// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace rgu::nn {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences: entry i is (f(p + h e_i) - f(p - h e_i)) / (2h).
/// Only evaluates loss_fn; it shares no code with the analytic gradients it checks.
std::vector<double> finite_diff_grad(const ScalarFn& loss_fn, std::span<const double> params,
                                     double h);

/// Central-difference estimate of the directional derivative of f at p along v.
double directional_derivative(const ScalarFn& fn, std::span<const double> p,
                              std::span<const double> v, double h);

}  // namespace rgu::nn
