// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rcrnn::ad {

void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_string(a) + " vs " + shape_string(b));
}

void Tape::record(Tensor output, std::function<void()> backward) {
  if (!enabled_) return;
  output.set_requires_grad(true);
  entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(Tensor loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument(
        "backward: loss must be a scalar, got shape " +
        (loss.defined() ? shape_string(loss.shape()) : std::string("<none>")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument(
        "backward: loss does not depend on any tensor requiring a gradient");
  }
  for (auto& e : entries_) e.output.zero_grad();
  loss.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

namespace {

bool needs_grad(const Tensor& a) { return a.requires_grad(); }
bool needs_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

bool is_suffix(const Shape& whole, const Shape& tail) {
  if (tail.size() > whole.size()) return false;
  return std::equal(tail.begin(), tail.end(),
                    whole.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

void require_rank(std::string_view op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got shape " +
                                shape_string(x.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  if (needs_grad(x)) {
    tape.record(out, [x, out, deriv]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xv = x.data();
      auto ov = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], ov[i]);
    });
  }
  return out;
}

std::size_t same_pad_out(std::size_t in, std::size_t stride) {
  return (in + stride - 1) / stride;
}

std::size_t same_pad_before(std::size_t in, std::size_t out, std::size_t k,
                            std::size_t stride) {
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>((out - 1) * stride + k) -
                               static_cast<std::ptrdiff_t>(in);
  return total > 0 ? static_cast<std::size_t>(total / 2) : 0;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) shape_error("add", a.shape(), b.shape());
  Tensor out(a.shape());
  const std::size_t n = b.size();
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i % n];
  if (needs_grad(a, b)) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        const std::size_t n = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
  if (needs_grad(a, b)) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  if (needs_grad(a, b)) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      auto av = a.data(), bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = od.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (needs_grad(a, b)) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      auto av = a.data(), bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bv.data() + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + p] += s;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aval = av[i * k + p];
            if (aval == 0.0) continue;
            double* gbrow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aval * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      tape, x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor reduce_sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (needs_grad(x)) {
    tape.record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : x.grad()) gx += g;
    });
  }
  return out;
}

Tensor reduce_mean(Tape& tape, const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  if (needs_grad(x)) {
    tape.record(out, [x, out, inv]() mutable {
      const double g = out.grad()[0] * inv;
      for (double& gx : x.grad()) gx += g;
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tensor out = x.reshaped(std::move(shape));
  if (needs_grad(x)) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  bool grad = false;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) shape_error("concat", first, p.shape());
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) shape_error("concat", first, p.shape());
    }
    out_shape[axis] += p.shape()[axis];
    grad = grad || p.requires_grad();
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  Tensor out(out_shape);
  auto od = out.data();
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.shape()[axis] * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.data() + o * chunk, chunk, od.data() + o * out_row + offset);
    }
    offset += chunk;
  }
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record(out, [inputs, out, outer, inner, out_row, axis]() mutable {
      auto g = out.grad();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        const std::size_t chunk = p.shape()[axis] * inner;
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < chunk; ++i) {
              gp[o * chunk + i] += g[o * out_row + offset + i];
            }
          }
        }
        offset += chunk;
      }
    });
  }
  return out;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") on axis " +
                                std::to_string(axis) + " invalid for shape " +
                                shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  const std::size_t in_row = x.dim(axis) * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t start = begin * inner;

  Tensor out(out_shape);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.data() + o * in_row + start, chunk, od.data() + o * chunk);
  }
  if (needs_grad(x)) {
    tape.record(out, [x, out, outer, in_row, chunk, start]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < chunk; ++i) gx[o * in_row + start + i] += g[o * chunk + i];
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x,
                   std::span<const std::size_t> rows) {
  if (x.rank() < 1 || rows.empty()) {
    throw std::invalid_argument("gather_rows: need rank >= 1 and >= 1 row, got " +
                                shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t width = x.size() / n;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  auto xd = x.data();
  auto od = out.data();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(idx[r]) +
                              " out of range for shape " + shape_string(x.shape()));
    }
    std::copy_n(xd.data() + idx[r] * width, width, od.data() + r * width);
  }
  if (needs_grad(x)) {
    tape.record(out, [x, out, idx, width]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t i = 0; i < width; ++i) gx[idx[r] * width + i] += g[r * width + i];
      }
    });
  }
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel,
              const Tensor& bias, Stride2 stride) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", kernel, 4);
  if (kernel.dim(2) != x.dim(2)) shape_error("conv2d", x.shape(), kernel.shape());
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(3)) {
    shape_error("conv2d", kernel.shape(), bias.shape());
  }
  if (stride[0] == 0 || stride[1] == 0) {
    throw std::invalid_argument("conv2d: stride must be positive");
  }
  const std::size_t T = x.dim(0), F = x.dim(1), cin = x.dim(2);
  const std::size_t kt = kernel.dim(0), kf = kernel.dim(1), cout = kernel.dim(3);
  const std::size_t ot = same_pad_out(T, stride[0]), of = same_pad_out(F, stride[1]);
  const auto pt = static_cast<std::ptrdiff_t>(same_pad_before(T, ot, kt, stride[0]));
  const auto pf = static_cast<std::ptrdiff_t>(same_pad_before(F, of, kf, stride[1]));

  Tensor out(Shape{ot, of, cout});
  auto xd = x.data(), wd = kernel.data(), bd = bias.data();
  auto od = out.data();
  for (std::size_t t = 0; t < ot; ++t) {
    for (std::size_t f = 0; f < of; ++f) {
      double* o = od.data() + (t * of + f) * cout;
      std::copy_n(bd.data(), cout, o);
      for (std::size_t i = 0; i < kt; ++i) {
        const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(t * stride[0] + i) - pt;
        if (it < 0 || it >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t j = 0; j < kf; ++j) {
          const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(f * stride[1] + j) - pf;
          if (jf < 0 || jf >= static_cast<std::ptrdiff_t>(F)) continue;
          const double* xin = xd.data() + (static_cast<std::size_t>(it) * F +
                                           static_cast<std::size_t>(jf)) * cin;
          const double* w = wd.data() + (i * kf + j) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double xv = xin[c];
            const double* wc = w + c * cout;
            for (std::size_t k = 0; k < cout; ++k) o[k] += xv * wc[k];
          }
        }
      }
    }
  }

  if (x.requires_grad() || kernel.requires_grad() || bias.requires_grad()) {
    tape.record(out, [=]() mutable {
      auto g = out.grad();
      auto xv = x.data(), wv = kernel.data();
      const bool gx_on = x.requires_grad(), gw_on = kernel.requires_grad();
      std::span<double> gx, gw;
      if (gx_on) gx = x.grad();
      if (gw_on) gw = kernel.grad();
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t p = 0; p < ot * of; ++p) {
          for (std::size_t k = 0; k < cout; ++k) gb[k] += g[p * cout + k];
        }
      }
      if (!gx_on && !gw_on) return;
      for (std::size_t t = 0; t < ot; ++t) {
        for (std::size_t f = 0; f < of; ++f) {
          const double* go = g.data() + (t * of + f) * cout;
          for (std::size_t i = 0; i < kt; ++i) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(t * stride[0] + i) - pt;
            if (it < 0 || it >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t j = 0; j < kf; ++j) {
              const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(f * stride[1] + j) - pf;
              if (jf < 0 || jf >= static_cast<std::ptrdiff_t>(F)) continue;
              const std::size_t in_off =
                  (static_cast<std::size_t>(it) * F + static_cast<std::size_t>(jf)) * cin;
              const std::size_t w_off = (i * kf + j) * cin * cout;
              for (std::size_t c = 0; c < cin; ++c) {
                const double* wc = wv.data() + w_off + c * cout;
                if (gx_on) {
                  double s = 0.0;
                  for (std::size_t k = 0; k < cout; ++k) s += go[k] * wc[k];
                  gx[in_off + c] += s;
                }
                if (gw_on) {
                  const double xval = xv[in_off + c];
                  double* gwc = gw.data() + w_off + c * cout;
                  for (std::size_t k = 0; k < cout; ++k) gwc[k] += xval * go[k];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor max_pool2d(Tape& tape, const Tensor& x, Stride2 window, Stride2 stride) {
  require_rank("max_pool2d", x, 3);
  if (window[0] == 0 || window[1] == 0 || stride[0] == 0 || stride[1] == 0) {
    throw std::invalid_argument("max_pool2d: window and stride must be positive");
  }
  const std::size_t T = x.dim(0), F = x.dim(1), C = x.dim(2);
  const std::size_t ot = same_pad_out(T, stride[0]), of = same_pad_out(F, stride[1]);
  const auto pt = static_cast<std::ptrdiff_t>(same_pad_before(T, ot, window[0], stride[0]));
  const auto pf = static_cast<std::ptrdiff_t>(same_pad_before(F, of, window[1], stride[1]));

  Tensor out(Shape{ot, of, C});
  std::vector<std::size_t> argmax(out.size());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t t = 0; t < ot; ++t) {
    for (std::size_t f = 0; f < of; ++f) {
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < window[0]; ++i) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(t * stride[0] + i) - pt;
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(T)) continue;
          for (std::size_t j = 0; j < window[1]; ++j) {
            const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(f * stride[1] + j) - pf;
            if (jf < 0 || jf >= static_cast<std::ptrdiff_t>(F)) continue;
            const std::size_t idx =
                (static_cast<std::size_t>(it) * F + static_cast<std::size_t>(jf)) * C + c;
            if (xd[idx] > best) {
              best = xd[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (t * of + f) * C + c;
        od[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  if (needs_grad(x)) {
    tape.record(out, [x, out, argmax]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
    });
  }
  return out;
}

Tensor max_over_time(Tape& tape, const Tensor& x) {
  require_rank("max_over_time", x, 2);
  const std::size_t T = x.dim(0), H = x.dim(1);
  Tensor out(Shape{H});
  std::vector<std::size_t> argmax(H, 0);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t h = 0; h < H; ++h) {
    double best = xd[h];
    for (std::size_t t = 1; t < T; ++t) {
      if (xd[t * H + h] > best) {
        best = xd[t * H + h];
        argmax[h] = t;
      }
    }
    od[h] = best;
  }
  if (needs_grad(x)) {
    tape.record(out, [x, out, argmax, H]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t h = 0; h < H; ++h) gx[argmax[h] * H + h] += g[h];
    });
  }
  return out;
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& wx,
                const Tensor& wh, const Tensor& bias) {
  require_rank("gru_cell", x, 2);
  require_rank("gru_cell", h, 2);
  const std::size_t in = x.dim(1), U = h.dim(1);
  if (x.dim(0) != 1 || h.dim(0) != 1) shape_error("gru_cell", x.shape(), h.shape());
  if (wx.shape() != Shape{in, 3 * U}) shape_error("gru_cell", x.shape(), wx.shape());
  if (wh.shape() != Shape{U, 3 * U}) shape_error("gru_cell", h.shape(), wh.shape());
  if (bias.shape() != Shape{3 * U}) shape_error("gru_cell", wh.shape(), bias.shape());

  const std::size_t G = 3 * U;
  auto xd = x.data(), hd = h.data(), wxd = wx.data(), whd = wh.data(), bd = bias.data();

  // Pre-activations: a = x Wx + b; z/r blocks also get h Wh.
  std::vector<double> a(bd.begin(), bd.end());
  for (std::size_t p = 0; p < in; ++p) {
    const double xv = xd[p];
    const double* row = wxd.data() + p * G;
    for (std::size_t j = 0; j < G; ++j) a[j] += xv * row[j];
  }
  for (std::size_t p = 0; p < U; ++p) {
    const double hv = hd[p];
    const double* row = whd.data() + p * G;
    for (std::size_t j = 0; j < 2 * U; ++j) a[j] += hv * row[j];
  }
  auto sig = [](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  };
  std::vector<double> z(U), r(U), n(U), rh(U);
  for (std::size_t u = 0; u < U; ++u) {
    z[u] = sig(a[u]);
    r[u] = sig(a[U + u]);
    rh[u] = r[u] * hd[u];
  }
  for (std::size_t p = 0; p < U; ++p) {
    const double v = rh[p];
    const double* row = whd.data() + p * G + 2 * U;
    for (std::size_t u = 0; u < U; ++u) a[2 * U + u] += v * row[u];
  }
  Tensor out(Shape{1, U});
  auto od = out.data();
  for (std::size_t u = 0; u < U; ++u) {
    n[u] = std::tanh(a[2 * U + u]);
    od[u] = z[u] * hd[u] + (1.0 - z[u]) * n[u];
  }

  if (x.requires_grad() || h.requires_grad() || wx.requires_grad() ||
      wh.requires_grad() || bias.requires_grad()) {
    tape.record(out, [=]() mutable {
      auto g = out.grad();
      auto xv = x.data(), hv = h.data(), wxv = wx.data(), whv = wh.data();
      std::vector<double> da(G), drh(U, 0.0), dh(U);
      for (std::size_t u = 0; u < U; ++u) {
        const double dz = g[u] * (hv[u] - n[u]);
        const double dn = g[u] * (1.0 - z[u]);
        dh[u] = g[u] * z[u];
        da[u] = dz * z[u] * (1.0 - z[u]);
        da[2 * U + u] = dn * (1.0 - n[u] * n[u]);
      }
      // d(rh) = da_n Wh_n^T
      for (std::size_t p = 0; p < U; ++p) {
        const double* row = whv.data() + p * G + 2 * U;
        double s = 0.0;
        for (std::size_t u = 0; u < U; ++u) s += da[2 * U + u] * row[u];
        drh[p] = s;
      }
      for (std::size_t u = 0; u < U; ++u) {
        const double dr = drh[u] * hv[u];
        dh[u] += drh[u] * r[u];
        da[U + u] = dr * r[u] * (1.0 - r[u]);
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t j = 0; j < G; ++j) gb[j] += da[j];
      }
      if (wh.requires_grad()) {
        auto gw = wh.grad();
        for (std::size_t p = 0; p < U; ++p) {
          double* row = gw.data() + p * G;
          for (std::size_t j = 0; j < 2 * U; ++j) row[j] += hv[p] * da[j];
          for (std::size_t u = 0; u < U; ++u) row[2 * U + u] += rh[p] * da[2 * U + u];
        }
      }
      if (h.requires_grad()) {
        auto gh = h.grad();
        for (std::size_t p = 0; p < U; ++p) {
          const double* row = whv.data() + p * G;
          double s = dh[p];
          for (std::size_t j = 0; j < 2 * U; ++j) s += da[j] * row[j];
          gh[p] += s;
        }
      }
      if (wx.requires_grad()) {
        auto gw = wx.grad();
        for (std::size_t p = 0; p < in; ++p) {
          double* row = gw.data() + p * G;
          for (std::size_t j = 0; j < G; ++j) row[j] += xv[p] * da[j];
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t p = 0; p < in; ++p) {
          const double* row = wxv.data() + p * G;
          double s = 0.0;
          for (std::size_t j = 0; j < G; ++j) s += da[j] * row[j];
          gx[p] += s;
        }
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool train,
               std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::bernoulli_distribution coin(keep);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = coin(rng) ? 1.0 / keep : 0.0;
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * mask[i];
  if (needs_grad(x)) {
    tape.record(out, [x, out, mask]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

}  // namespace rcrnn::ad
