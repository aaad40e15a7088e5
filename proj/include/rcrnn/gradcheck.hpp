// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "rcrnn/tensor.hpp"

namespace rcrnn {

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// coordinate of x. x is perturbed in place and restored. Throws
/// std::domain_error if f returns a non-finite value.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  Tensor& x, double eps = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-6);

}  // namespace rcrnn
