// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rcrnn/params.hpp"

namespace rcrnn {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

/// One bias-corrected ADAM step using each parameter's accumulated gradient.
/// Parameters rejected by `trainable` (or lacking a gradient) are untouched.
void adam_update(Parameters& params, AdamState& state, const AdamOptions& opt,
                 const std::function<bool(const std::string&)>& trainable = {});

}  // namespace rcrnn
