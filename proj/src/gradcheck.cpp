// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcrnn {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + eps;
    const double up = f(x);
    xd[i] = orig - eps;
    const double down = f(x);
    xd[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite difference: f is not finite near coordinate " +
                              std::to_string(i));
    }
    od[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace rcrnn
