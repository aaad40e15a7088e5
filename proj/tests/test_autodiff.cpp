// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "rcrnn/autodiff.hpp"
#include "rcrnn/gradcheck.hpp"
#include "rcrnn/optim.hpp"
#include "rcrnn/params.hpp"
#include "rcrnn/verify/suites.hpp"

using namespace rcrnn;

TEST_CASE("every primitive and composed loss matches finite differences") {
  for (const auto& r : verify::gradient_suite()) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("backward accumulates once per call into leaves") {
  Tensor x({3}, std::vector<double>{1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor y = ad::reduce_sum(tape, ad::mul(tape, x, x));
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("a disabled tape builds no graph") {
  Tensor x({2, 2}, 1.0);
  x.set_requires_grad(true);
  ad::Tape tape;
  tape.set_enabled(false);
  Tensor y = ad::relu(tape, ad::scale(tape, x, 2.0));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
  CHECK(y[3] == 2.0);
}

TEST_CASE("ops on constants record nothing") {
  ad::Tape tape;
  Tensor a({2}, 1.0), b({2}, 2.0);
  (void)ad::add(tape, a, b);
  CHECK(tape.size() == 0);
}

TEST_CASE("shape mismatches name the op") {
  ad::Tape tape;
  Tensor a({2, 3}), b({3, 3});
  CHECK_THROWS_WITH_AS(ad::add(tape, a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(ad::matmul(tape, a, a), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_AS(ad::log(tape, Tensor({2}, -1.0)), std::domain_error);
  CHECK_THROWS_AS(Tensor(Shape{0, 3}), std::invalid_argument);
}

TEST_CASE("same-padded conv and pool output sizes are ceil(n / stride)") {
  ad::Tape tape;
  for (std::size_t t : {1u, 2u, 7u, 8u, 1291u}) {
    Tensor x({t, 5, 1}, 0.5);
    Tensor k({3, 3, 1, 2}, 0.1), b({2});
    Tensor y = ad::conv2d(tape, x, k, b, {2, 2});
    CHECK(y.dim(0) == (t + 1) / 2);
    CHECK(y.dim(1) == 3);
    CHECK(y.dim(2) == 2);
    Tensor p = ad::max_pool2d(tape, x, {2, 2}, {2, 2});
    CHECK(p.dim(0) == (t + 1) / 2);
  }
}

TEST_CASE("conv2d matches a direct sum on a hand case") {
  // 3x3 input, single 3x3 all-ones kernel, stride 1: each output is the sum
  // of its in-bounds 3x3 neighbourhood.
  ad::Tape tape;
  Tensor x({3, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({3, 3, 1, 1}, 1.0), b({1}, 0.5);
  Tensor y = ad::conv2d(tape, x, k, b, {1, 1});
  CHECK(y[4] == doctest::Approx(45.5));
  CHECK(y[0] == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
  CHECK(y[8] == doctest::Approx(5 + 6 + 8 + 9 + 0.5));
}

TEST_CASE("gru cell with zero weights halves the state toward zero") {
  // z = r = sigmoid(0) = 0.5, n = tanh(0) = 0: h' = 0.5 h.
  ad::Tape tape;
  Tensor x({1, 2}, 0.3), h({1, 3}, std::vector<double>{1.0, -2.0, 0.4});
  Tensor wx({2, 9}), wh({3, 9}), b({9});
  Tensor y = ad::gru_cell(tape, x, h, wx, wh, b);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(-1.0));
}

TEST_CASE("dropout is the identity outside training and rescales kept units in training") {
  ad::Tape tape;
  std::mt19937_64 rng(1);
  Tensor x({1000}, 1.0);
  Tensor same = ad::dropout(tape, x, 0.5, false, rng);
  CHECK(same[17] == 1.0);
  Tensor d = ad::dropout(tape, x, 0.5, true, rng);
  std::size_t kept = 0;
  for (double v : d.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    kept += v != 0.0;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
}

TEST_CASE("finite differences reject non-finite objectives") {
  Tensor x({1}, 0.0);
  CHECK_THROWS_AS(finite_difference_gradient(
                      [](const Tensor&) { return std::numeric_limits<double>::quiet_NaN(); }, x),
                  std::domain_error);
}

TEST_CASE("first adam step moves each weight by about lr against its gradient") {
  // Bias correction makes m_hat = g and v_hat = g^2 after one step.
  Parameters p;
  Tensor& w = p.add("w", Tensor({2}, std::vector<double>{1.0, 1.0}));
  w.set_requires_grad(true);
  w.grad()[0] = 3.0;
  w.grad()[1] = -0.25;
  AdamState state;
  AdamOptions opt;
  opt.lr = 0.01;
  adam_update(p, state, opt);
  CHECK(w[0] == doctest::Approx(1.0 - 0.01 * 3.0 / (3.0 + 1e-8)));
  CHECK(w[1] == doctest::Approx(1.0 + 0.01 * 0.25 / (0.25 + 1e-8)));
  CHECK(state.step == 1);
}

TEST_CASE("adam leaves rejected parameters untouched") {
  Parameters p;
  Tensor& a = p.add("frozen.w", Tensor({1}, 1.0));
  Tensor& b = p.add("live.w", Tensor({1}, 1.0));
  a.grad()[0] = 1.0;
  b.grad()[0] = 1.0;
  AdamState state;
  adam_update(p, state, {}, [](const std::string& n) { return starts_with(n, "live."); });
  CHECK(a[0] == 1.0);
  CHECK(b[0] < 1.0);
}
