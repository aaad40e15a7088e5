// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rcrnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major double tensor with an optional gradient slot.
///
/// Tensor is a cheap handle: copies share the same storage. Use clone() for a
/// deep copy. The value buffer itself is held by a second shared pointer so
/// that share_data() can hand out leaves which read the same values but
/// accumulate gradients separately.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  // Handle semantics: constness of the handle does not protect the storage,
  // as with shared_ptr. Backward closures capture const handles.
  std::span<double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Allocates a zero gradient on first use.
  /// Allocated (zeroed) on first access.
  std::span<double> grad() const;
  void zero_grad();
  void drop_grad();

  Tensor clone() const;
  /// Leaf tensor over the same value buffer with its own gradient slot.
  Tensor share_data() const;
  /// Same values, reshaped; shares nothing with this tensor.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

}  // namespace rcrnn
