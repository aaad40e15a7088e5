// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over Tensor. A Tape records each primitive as
// it runs; backward() replays the records in reverse. Primitives only record
// when at least one input requires a gradient, so inference on frozen weights
// builds no graph at all.
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "rcrnn/tensor.hpp"

namespace rcrnn::ad {

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Appends a backward step for `output`. The closure reads output.grad()
  /// and accumulates into its inputs.
  void record(Tensor output, std::function<void()> backward);

  std::size_t size() const { return entries_.size(); }
  /// A disabled tape records nothing; outputs then never require gradients.
  void set_enabled(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded step in reverse.
  /// Intermediate gradients are reset first so repeated calls accumulate
  /// exactly one extra gradient into each leaf.
  void backward(Tensor loss);

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool enabled_ = true;
};

// Elementwise and linear algebra. Shapes are checked; a mismatch throws
// std::invalid_argument naming the op and both shapes.

/// a + b where b's shape equals a's shape or a trailing suffix of it.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
/// (m, k) x (k, n) -> (m, n)
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);

Tensor reduce_sum(Tape& tape, const Tensor& x);
Tensor reduce_mean(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Rows of x (along axis 0) at the given indices, in order.
Tensor gather_rows(Tape& tape, const Tensor& x,
                   std::span<const std::size_t> rows);

using Stride2 = std::array<std::size_t, 2>;

/// Same-padded 2D convolution.
/// x: (T, F, Cin); kernel: (kt, kf, Cin, Cout); bias: (Cout).
/// Output is (ceil(T/st), ceil(F/sf), Cout).
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel,
              const Tensor& bias, Stride2 stride);

/// Same-padded max pooling over (T, F, C); padding never wins the max.
Tensor max_pool2d(Tape& tape, const Tensor& x, Stride2 window, Stride2 stride);

/// Max over axis 0 of a (T, H) matrix -> (H).
Tensor max_over_time(Tape& tape, const Tensor& x);

/// One GRU step with the reset gate applied before the recurrent product:
///   z = sigmoid(x Wx_z + h Wh_z + b_z)
///   r = sigmoid(x Wx_r + h Wh_r + b_r)
///   n = tanh(x Wx_n + (r * h) Wh_n + b_n)
///   h' = z * h + (1 - z) * n
/// x: (1, In); h: (1, U); wx: (In, 3U); wh: (U, 3U); bias: (3U).
/// Gate blocks are laid out [z | r | n] along the last axis.
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& wx,
                const Tensor& wh, const Tensor& bias);

/// Inverted dropout. With train == false this is the identity.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool train,
               std::mt19937_64& rng);

/// Throws std::invalid_argument("<op>: shape mismatch ...").
[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const Shape& b);

}  // namespace rcrnn::ad
