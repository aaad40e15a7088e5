// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/verify/suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "rcrnn/detector.hpp"
#include "rcrnn/gradcheck.hpp"
#include "rcrnn/metrics.hpp"
#include "rcrnn/verify/oracles.hpp"

namespace rcrnn::verify {

namespace {

using Builder = std::function<Tensor(ad::Tape&)>;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Values with |x| in [0.1, 1] and random sign: far from the relu kink.
Tensor off_kink_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// A shuffled arithmetic progression: every pair differs by >= 0.05, so no
// max has a near-tie.
Tensor distinct_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = -1.0 + 0.05 * static_cast<double>(i);
  std::shuffle(d.begin(), d.end(), rng);
  return t;
}

// A coordinate sits within kKinkReach of a relu / max tie when its one-sided
// differences at that reach disagree; such points are excluded.
constexpr double kKinkReach = 1e-4;
constexpr double kMaxExcludedShare = 0.05;

bool near_kink(const std::function<double()>& f, Tensor& x, std::size_t i) {
  auto d = x.data();
  const double x0 = d[i];
  const double f0 = f();
  d[i] = x0 + kKinkReach;
  const double fp = f();
  d[i] = x0 - kKinkReach;
  const double fm = f();
  d[i] = x0;
  const double right = (fp - f0) / kKinkReach, left = (f0 - fm) / kKinkReach;
  return std::abs(right - left) > 1e-2 * std::max({std::abs(right), std::abs(left), 1e-3});
}

// Compares d(builder)/d(input) for every input against central differences.
CheckResult check(const std::string& name, std::vector<Tensor> inputs, const Builder& build,
                  double tolerance) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    ad::Tape tape;
    Tensor loss = build(tape);
    tape.backward(loss);
  }
  const std::function<double()> value = [&] {
    ad::Tape tape;
    tape.set_enabled(false);
    return build(tape).item();
  };
  double worst = 0.0;
  std::size_t coords = 0, excluded = 0;
  for (auto& x : inputs) {
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    Tensor numeric = finite_difference_gradient([&](const Tensor&) { return value(); }, x, kGradEps);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double a = analytic[i], n = numeric[i];
      const double err = max_relative_error(std::span<const double>(&a, 1), std::span<const double>(&n, 1));
      if (err >= tolerance && near_kink(value, x, i)) {
        ++excluded;
        continue;
      }
      worst = std::max(worst, err);
    }
    coords += x.size();
  }
  const bool few_excluded = static_cast<double>(excluded) <= kMaxExcludedShare * static_cast<double>(coords);
  std::ostringstream os;
  os << coords << " coordinates";
  if (excluded) os << " (" << excluded << " at relu/max ties excluded)";
  os << ", max relative error " << worst;
  return {name, worst < tolerance && few_excluded, worst, os.str()};
}

// Weighted sum so that every output coordinate carries a distinct gradient.
Tensor project(ad::Tape& tape, const Tensor& out, const Tensor& weights) {
  return ad::reduce_sum(tape, ad::mul(tape, out, weights));
}

CheckResult check_params(const std::string& name, Parameters& params, std::vector<Tensor> extra,
                         const Builder& build, double tolerance) {
  std::vector<Tensor> inputs = std::move(extra);
  for (auto& [n, t] : params) inputs.push_back(t);
  return check(name, std::move(inputs), build, tolerance);
}

}  // namespace

std::vector<CheckResult> gradient_suite(double tol) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(20240611);

  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), w = random_tensor({3, 4}, rng);
    out.push_back(check("add", {a, b}, [=](ad::Tape& t) { return project(t, ad::add(t, a, b), w); }, tol));
    out.push_back(check("sub", {a, b}, [=](ad::Tape& t) { return project(t, ad::sub(t, a, b), w); }, tol));
    out.push_back(check("mul", {a, b}, [=](ad::Tape& t) { return project(t, ad::mul(t, a, b), w); }, tol));
    out.push_back(check("scale", {a}, [=](ad::Tape& t) { return project(t, ad::scale(t, a, -1.7), w); }, tol));
    Tensor row = random_tensor({4}, rng);
    out.push_back(check("add_broadcast", {a, row},
                        [=](ad::Tape& t) { return project(t, ad::add(t, a, row), w); }, tol));
  }
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), w = random_tensor({3, 2}, rng);
    out.push_back(check("matmul", {a, b}, [=](ad::Tape& t) { return project(t, ad::matmul(t, a, b), w); }, tol));
  }
  {
    Tensor x = off_kink_tensor({2, 5}, rng), w = random_tensor({2, 5}, rng);
    Tensor pos = random_tensor({2, 5}, rng, 0.5, 2.0);
    out.push_back(check("relu", {x}, [=](ad::Tape& t) { return project(t, ad::relu(t, x), w); }, tol));
    out.push_back(check("sigmoid", {x}, [=](ad::Tape& t) { return project(t, ad::sigmoid(t, x), w); }, tol));
    out.push_back(check("tanh", {x}, [=](ad::Tape& t) { return project(t, ad::tanh(t, x), w); }, tol));
    out.push_back(check("exp", {x}, [=](ad::Tape& t) { return project(t, ad::exp(t, x), w); }, tol));
    out.push_back(check("log", {pos}, [=](ad::Tape& t) { return project(t, ad::log(t, pos), w); }, tol));
    out.push_back(check("reduce_sum", {x}, [=](ad::Tape& t) {
      return ad::mul(t, ad::reduce_sum(t, x), ad::reduce_sum(t, x));
    }, tol));
    out.push_back(check("reduce_mean", {x}, [=](ad::Tape& t) {
      Tensor m = ad::reduce_mean(t, x);
      return ad::mul(t, m, ad::exp(t, m));
    }, tol));
    Tensor w2 = random_tensor({5, 2}, rng);
    out.push_back(check("reshape", {x}, [=](ad::Tape& t) { return project(t, ad::reshape(t, x, {5, 2}), w2); }, tol));
    Tensor ws = random_tensor({2, 3}, rng);
    out.push_back(check("slice", {x}, [=](ad::Tape& t) { return project(t, ad::slice(t, x, 1, 1, 4), ws); }, tol));
  }
  {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({4, 3}, rng), c = random_tensor({2, 2}, rng);
    Tensor w0 = random_tensor({6, 3}, rng), w1 = random_tensor({2, 5}, rng);
    out.push_back(check("concat_axis0", {a, b}, [=](ad::Tape& t) {
      std::vector<Tensor> parts{a, b};
      return project(t, ad::concat(t, parts, 0), w0);
    }, tol));
    out.push_back(check("concat_axis1", {a, c}, [=](ad::Tape& t) {
      std::vector<Tensor> parts{a, c};
      return project(t, ad::concat(t, parts, 1), w1);
    }, tol));
    Tensor wg = random_tensor({4, 3}, rng);
    out.push_back(check("gather_rows", {b}, [=](ad::Tape& t) {
      const std::vector<std::size_t> rows{3, 0, 3, 1};
      return project(t, ad::gather_rows(t, b, rows), wg);
    }, tol));
  }
  {
    Tensor x = random_tensor({5, 4, 2}, rng), k = random_tensor({3, 3, 2, 3}, rng), b = random_tensor({3}, rng);
    Tensor w1 = random_tensor({5, 4, 3}, rng), w2 = random_tensor({3, 2, 3}, rng);
    out.push_back(check("conv2d_stride1", {x, k, b}, [=](ad::Tape& t) {
      return project(t, ad::conv2d(t, x, k, b, {1, 1}), w1);
    }, tol));
    out.push_back(check("conv2d_stride2", {x, k, b}, [=](ad::Tape& t) {
      return project(t, ad::conv2d(t, x, k, b, {2, 2}), w2);
    }, tol));
    Tensor kt = random_tensor({3, 1, 2, 3}, rng);
    out.push_back(check("conv2d_temporal", {x, kt, b}, [=](ad::Tape& t) {
      return project(t, ad::conv2d(t, x, kt, b, {1, 1}), w1);
    }, tol));
  }
  {
    Tensor x = distinct_tensor({5, 4, 2}, rng), w = random_tensor({3, 2, 2}, rng);
    out.push_back(check("max_pool2d", {x}, [=](ad::Tape& t) {
      return project(t, ad::max_pool2d(t, x, {2, 2}, {2, 2}), w);
    }, tol));
    Tensor m = distinct_tensor({6, 3}, rng), wm = random_tensor({3}, rng);
    out.push_back(check("max_over_time", {m}, [=](ad::Tape& t) {
      return project(t, ad::max_over_time(t, m), wm);
    }, tol));
  }
  {
    Tensor x = random_tensor({1, 3}, rng), h = random_tensor({1, 2}, rng);
    Tensor wx = random_tensor({3, 6}, rng), wh = random_tensor({2, 6}, rng), b = random_tensor({6}, rng);
    Tensor w = random_tensor({1, 2}, rng);
    out.push_back(check("gru_cell", {x, h, wx, wh, b}, [=](ad::Tape& t) {
      // Two steps so the recurrent path is exercised through h.
      Tensor h1 = ad::gru_cell(t, x, h, wx, wh, b);
      return project(t, ad::gru_cell(t, x, h1, wx, wh, b), w);
    }, tol));
  }
  {
    Tensor x = random_tensor({4, 5}, rng), w = random_tensor({4, 5}, rng);
    out.push_back(check("dropout", {x}, [=](ad::Tape& t) {
      std::mt19937_64 mask_rng(7);
      return project(t, ad::dropout(t, x, 0.5, true, mask_rng), w);
    }, tol));
  }
  {
    Tensor map = distinct_tensor({10, 3}, rng);
    const std::vector<Interval> rois{Interval(0.4, 9.6), Interval(2.0, 4.5), Interval(6.2, 7.1)};
    Tensor w = random_tensor({3, 7, 3}, rng);
    out.push_back(check("roi_pool", {map}, [=](ad::Tape& t) {
      return project(t, roi_pool(t, map, rois, 7), w);
    }, tol));
  }
  {
    Tensor x({6}, std::vector<double>{-2.3, -0.4, 0.2, 0.7, 1.6, -1.2});
    Tensor w = random_tensor({6}, rng);
    out.push_back(check("smooth_l1", {x}, [=](ad::Tape& t) { return project(t, smooth_l1(t, x), w); }, tol));
    Tensor p = random_tensor({6}, rng, 0.1, 0.9);
    const std::vector<double> y{1, 0, 0, 1, 1, 0};
    out.push_back(check("binary_cross_entropy", {p}, [=](ad::Tape& t) {
      return project(t, binary_cross_entropy(t, p, y), w);
    }, tol));
  }
  {
    // Multi-class loss: scores (N, C) in (0, 1), encodings (N, 2C).
    Tensor logits = random_tensor({6, 2}, rng), enc = random_tensor({6, 4}, rng, -0.8, 0.8);
    LossTargets targets;
    targets.labels = {1, 0, -1, 2, 0, 1};
    targets.regression = {{0.1, -0.2}, {}, {}, {-0.3, 0.4}, {}, {0.5, 0.05}};
    out.push_back(check("multitask_loss", {logits, enc}, [=](ad::Tape& t) {
      return multitask_loss(t, ad::sigmoid(t, logits), enc, targets, 1.0).total;
    }, tol));
  }
  {
    // Both heads on a toy 10-frame map with fixed proposals.
    ModelConfig cfg;
    cfg.rnn_type = RnnType::none;
    cfg.projection_width = 4;
    cfg.anchor_sizes = {1, 2, 4};
    cfg.rpn_width = 6;
    cfg.dense_width = 5;
    cfg.num_classes = 2;
    cfg.dropout = 0.0;
    std::mt19937_64 init(11);
    Parameters params;
    add_rpn_params(params, cfg, init);
    add_classifier_params(params, cfg, init);
    Tensor map = random_tensor({10, 4}, rng);
    GroundTruth truth;
    truth.intervals = {Interval(2.0, 5.5), Interval(6.5, 9.0)};
    truth.classes = {0, 1};
    const std::vector<Interval> proposals{Interval(1.5, 5.0), Interval(3.0, 8.0), Interval(6.0, 9.5),
                                          Interval(0.2, 1.9)};
    out.push_back(check_params("composed_loss", params, {map}, [=](ad::Tape& t) {
      std::mt19937_64 sample_rng(5);
      FeatureMap fm{map, 1.0};
      return detector_loss_on_map(t, fm, truth, cfg, params, false, sample_rng, &proposals).total;
    }, tol));
  }
  for (RnnType rnn : {RnnType::none, RnnType::gru, RnnType::bigru}) {
    // Tiny backbone + pre-training head on a 12-frame spectrogram.
    ModelConfig cfg;
    cfg.rnn_type = rnn;
    cfg.units = 2;
    cfg.channels = {2, 2, 2};
    cfg.projection_width = 3;
    std::mt19937_64 init(13);
    Parameters params;
    add_backbone_params(params, cfg, init);
    add_pretrain_head_params(params, cfg, init);
    Spectrogram spec;
    spec.frames = 12;
    spec.frame_shift_s = 1024.0 / 44100.0;
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < 12 * kNumBands; ++i) spec.values.push_back(g(rng));
    out.push_back(check_params("backbone_" + to_string(rnn), params, {}, [=](ad::Tape& t) {
      Tensor p = pretrain_forward(t, spec, cfg, params);
      const double y = 1.0;
      return ad::reduce_sum(t, binary_cross_entropy(t, p, std::span<const double>(&y, 1)));
    }, tol));
  }
  return out;
}

CheckResult nms_oracle_suite(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(0, 20);
  std::uniform_real_distribution<double> pos(0.0, 50.0), len(0.5, 12.0), thresh(0.1, 0.9);
  std::uniform_int_distribution<int> coarse(0, 4);
  std::size_t mismatches = 0;
  std::string first;
  for (std::size_t k = 0; k < instances; ++k) {
    std::vector<Proposal> props;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double onset = pos(rng);
      // Coarse scores make ties common so the tie-break is exercised.
      props.push_back({Interval(onset, onset + len(rng)), 0.2 * coarse(rng)});
    }
    const double t = thresh(rng);
    if (nms_indices(props, t) != brute_force_nms(props, t)) {
      if (mismatches++ == 0) first = "instance " + std::to_string(k);
    }
  }
  return {"nms_oracle", mismatches == 0, static_cast<double>(mismatches),
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches" +
              (first.empty() ? "" : " (first: " + first + ")")};
}

CheckResult roundtrip_suite(std::size_t pairs, std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> c(-500.0, 500.0), l(0.01, 300.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const Interval anchor = Interval::from_center(c(rng), l(rng));
    const Interval gt = Interval::from_center(c(rng), l(rng));
    const Interval back = decode(encode(gt, anchor), anchor);
    worst = std::max({worst, std::abs(back.onset() - gt.onset()), std::abs(back.offset() - gt.offset())});
  }
  std::ostringstream os;
  os << pairs << " pairs, max abs error " << worst;
  return {"encode_decode_roundtrip", worst < tolerance, worst, os.str()};
}

std::vector<CheckResult> metric_hand_cases() {
  std::vector<CheckResult> out;
  auto counts_case = [&](const std::string& name, const std::vector<double>& refs,
                         const std::vector<double>& dets, std::size_t tp, std::size_t d,
                         std::size_t i) {
    const MatchCounts c = match_events(refs, dets, 0.5).counts;
    const bool ok = c.tp == tp && c.deletions == d && c.insertions == i && c.references == refs.size();
    out.push_back({name, ok, 0.0,
                   "TP=" + std::to_string(c.tp) + " D=" + std::to_string(c.deletions) +
                       " I=" + std::to_string(c.insertions)});
  };
  counts_case("match_within_collar", {3.0}, {3.4}, 1, 0, 0);
  counts_case("match_outside_collar", {3.0}, {3.6}, 0, 1, 1);
  counts_case("match_one_to_one", {3.0, 3.3}, {3.2}, 1, 1, 0);

  auto score_case = [&](const std::string& name, const MatchCounts& c, std::optional<double> er,
                        double f1) {
    const EventScores s = event_scores(c);
    const bool er_ok = er ? (s.error_rate && *s.error_rate == *er) : !s.error_rate;
    std::ostringstream os;
    os << "ER=" << (s.error_rate ? std::to_string(*s.error_rate) : "undefined") << " F1=" << s.f1;
    out.push_back({name, er_ok && s.f1 == f1, 0.0, os.str()});
  };
  score_case("scores_perfect", {4, 0, 0, 4}, 0.0, 1.0);
  score_case("scores_half", {1, 1, 1, 2}, 1.0, 0.5);
  score_case("scores_all_deleted", {0, 0, 5, 5}, 1.0, 0.0);
  return out;
}

CheckResult matching_oracle_suite(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(0, 4);
  // A 0.125 s grid over 3 s: collisions, exact-collar distances and
  // competing candidates are all common.
  std::uniform_int_distribution<int> grid(0, 24);
  std::size_t mismatches = 0;
  std::string first;
  for (std::size_t k = 0; k < instances; ++k) {
    std::vector<double> refs(static_cast<std::size_t>(count(rng)));
    std::vector<double> dets(static_cast<std::size_t>(count(rng)));
    for (double& r : refs) r = 0.125 * grid(rng);
    for (double& d : dets) d = 0.125 * grid(rng);
    const MatchResult m = match_events(refs, dets, 0.5);
    const std::size_t best = exhaustive_max_matching(refs, dets, 0.5);
    bool ok = m.counts.tp == best && m.counts.deletions == refs.size() - best &&
              m.counts.insertions == dets.size() - best;
    // Every reported pair must be inside the collar and one-to-one.
    std::vector<char> ref_used(refs.size(), 0), det_used(dets.size(), 0);
    for (const auto& [r, d] : m.pairs) {
      ok = ok && !ref_used[r] && !det_used[d] && std::abs(refs[r] - dets[d]) <= 0.5 + 1e-9;
      ref_used[r] = det_used[d] = 1;
    }
    if (!ok && mismatches++ == 0) first = "instance " + std::to_string(k);
  }
  return {"matching_oracle", mismatches == 0, static_cast<double>(mismatches),
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches" +
              (first.empty() ? "" : " (first: " + first + ")")};
}

bool run_selfcheck(std::ostream& os) {
  std::vector<CheckResult> all = gradient_suite();
  all.push_back(nms_oracle_suite());
  all.push_back(roundtrip_suite());
  for (auto& r : metric_hand_cases()) all.push_back(std::move(r));
  all.push_back(matching_oracle_suite());
  bool ok = true;
  for (const auto& r : all) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  os << (ok ? "selfcheck passed" : "selfcheck FAILED") << '\n';
  return ok;
}

}  // namespace rcrnn::verify
