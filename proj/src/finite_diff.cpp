// SPDX-License-Identifier: Apache-2.0
#include "rgu/finite_diff.hpp"

#include "rgu/errors.hpp"

namespace rgu::nn {

std::vector<double> finite_diff_grad(const ScalarFn& loss_fn, std::span<const double> params,
                                     double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
  std::vector<double> probe(params.begin(), params.end());
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = loss_fn(probe);
    probe[i] = saved - h;
    const double down = loss_fn(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double directional_derivative(const ScalarFn& fn, std::span<const double> p,
                              std::span<const double> v, double h) {
  if (!(h > 0.0)) throw DomainError("directional_derivative: step must be positive");
  if (p.size() != v.size()) throw ShapeError("directional_derivative: point/direction length");
  std::vector<double> fwd(p.size()), bwd(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    fwd[i] = p[i] + h * v[i];
    bwd[i] = p[i] - h * v[i];
  }
  return (fn(fwd) - fn(bwd)) / (2.0 * h);
}

}  // namespace rgu::nn
