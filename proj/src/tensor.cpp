// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace rcrnn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) return;  // rank-0 scalar
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor shape " + shape_string(shape) +
                                  " has a zero dimension");
    }
  }
}

}  // namespace

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  check_shape(shape);
  impl_->values = std::make_shared<std::vector<double>>(shape_size(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<Impl>()) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape) +
                                " does not match " +
                                std::to_string(values.size()) + " values");
  }
  impl_->values = std::make_shared<std::vector<double>>(std::move(values));
  impl_->shape = std::move(shape);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw std::out_of_range("axis " + std::to_string(axis) +
                            " out of range for shape " + shape_string(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::size() const { return impl_->values->size(); }

std::span<double> Tensor::data() const { return *impl_->values; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " +
                                shape_string(shape()));
  }
  return (*impl_->values)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  Tensor out(shape(), std::vector<double>(data().begin(), data().end()));
  out.set_requires_grad(requires_grad());
  return out;
}

Tensor Tensor::share_data() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = impl_->shape;
  out.impl_->values = impl_->values;
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_size(new_shape) != size()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape()) +
                                " to " + shape_string(new_shape));
  }
  return Tensor(std::move(new_shape),
                std::vector<double>(data().begin(), data().end()));
}

}  // namespace rcrnn
