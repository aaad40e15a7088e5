// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace rcrnn {

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

Tensor& Parameters::add(const std::string& name, Tensor value) {
  if (params_.count(name)) {
    throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
  value.set_requires_grad(true);
  return params_.emplace(name, std::move(value)).first->second;
}

Tensor& Parameters::add_glorot(const std::string& name, Shape shape,
                               std::size_t fan_in, std::size_t fan_out,
                               std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return add_uniform(name, std::move(shape), bound, rng);
}

Tensor& Parameters::add_uniform(const std::string& name, Shape shape,
                                double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return add(name, std::move(t));
}

Tensor& Parameters::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape)));
}

bool Parameters::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

Tensor& Parameters::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

std::size_t Parameters::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) {
    if (starts_with(name, prefix)) n += t.size();
  }
  return n;
}

std::vector<std::string> Parameters::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params_) {
    if (starts_with(name, prefix)) out.push_back(name);
  }
  return out;
}

void Parameters::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void Parameters::set_requires_grad(std::string_view prefix, bool on) {
  for (auto& [name, t] : params_) {
    if (starts_with(name, prefix)) t.set_requires_grad(on);
  }
}

void Parameters::copy_from(const Parameters& src, std::string_view prefix) {
  for (auto& [name, t] : params_) {
    if (!starts_with(name, prefix)) continue;
    if (!src.contains(name)) {
      throw std::invalid_argument("source weights lack parameter '" + name + "'");
    }
    const Tensor& s = src.at(name);
    if (s.shape() != t.shape()) {
      throw std::invalid_argument("parameter '" + name + "' has shape " +
                                  shape_string(s.shape()) + " in source but " +
                                  shape_string(t.shape()) + " in model");
    }
    std::copy(s.data().begin(), s.data().end(), t.data().begin());
  }
}

Parameters Parameters::clone() const {
  Parameters out;
  for (const auto& [name, t] : params_) {
    Tensor c = t.clone();
    c.set_requires_grad(t.requires_grad());
    out.params_.emplace(name, std::move(c));
  }
  return out;
}

}  // namespace rcrnn
