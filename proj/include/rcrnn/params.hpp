// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rcrnn/tensor.hpp"

namespace rcrnn {

/// Named learnable arrays, iterated in lexicographic name order so that every
/// walk over the set (updates, archives, checksums) is deterministic.
class Parameters {
 public:
  Tensor& add(const std::string& name, Tensor value);
  /// Glorot-style uniform init: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  Tensor& add_glorot(const std::string& name, Shape shape, std::size_t fan_in,
                     std::size_t fan_out, std::mt19937_64& rng);
  /// U(-a, a) with a = 1/sqrt(fan); used for recurrent matrices.
  Tensor& add_uniform(const std::string& name, Shape shape, double bound,
                      std::mt19937_64& rng);
  Tensor& add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t count(std::string_view prefix = {}) const;
  std::vector<std::string> names(std::string_view prefix = {}) const;

  void zero_grad();
  void set_requires_grad(std::string_view prefix, bool on);

  /// Copies values of every parameter under `prefix` from `src`; shapes must
  /// match and every name must exist in `src`.
  void copy_from(const Parameters& src, std::string_view prefix);

  /// Deep copy (fresh storage, no gradients).
  Parameters clone() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace rcrnn
