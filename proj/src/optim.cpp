// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rcrnn {

void adam_update(Parameters& params, AdamState& state, const AdamOptions& opt,
                 const std::function<bool(const std::string&)>& trainable) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& [name, p] : params) {
    if (trainable && !trainable(name)) continue;
    if (!p.has_grad()) continue;
    auto& mo = state.moments[name];
    if (mo.m.empty()) {
      mo.m.assign(p.size(), 0.0);
      mo.v.assign(p.size(), 0.0);
    } else if (mo.m.size() != p.size()) {
      throw std::invalid_argument("adam_update: state for '" + name + "' has " +
                                  std::to_string(mo.m.size()) +
                                  " entries, parameter has " +
                                  std::to_string(p.size()));
    }
    auto g = p.grad();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mo.m[i] = opt.beta1 * mo.m[i] + (1.0 - opt.beta1) * g[i];
      mo.v[i] = opt.beta2 * mo.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / c1;
      const double vhat = mo.v[i] / c2;
      w[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

}  // namespace rcrnn
