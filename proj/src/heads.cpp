// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rcrnn {

void add_rpn_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t H = cfg.feature_height();
  const auto R = static_cast<std::size_t>(cfg.rpn_width);
  const std::size_t k = cfg.anchors_per_frame();
  params.add_glorot("rpn.window.w", {3, 1, H, R}, 3 * H, 3 * R, rng);
  params.add_zeros("rpn.window.b", {R});
  params.add_glorot("rpn.cls.w", {R, k}, R, k, rng);
  params.add_zeros("rpn.cls.b", {k});
  params.add_glorot("rpn.reg.w", {R, 2 * k}, R, 2 * k, rng);
  params.add_zeros("rpn.reg.b", {2 * k});
}

void add_classifier_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t in = cfg.roi_bins * cfg.feature_height();
  const auto M = static_cast<std::size_t>(cfg.dense_width);
  const auto C = static_cast<std::size_t>(cfg.num_classes);
  params.add_glorot("cls.fc1.w", {in, M}, in, M, rng);
  params.add_zeros("cls.fc1.b", {M});
  params.add_glorot("cls.fc2.w", {M, M}, M, M, rng);
  params.add_zeros("cls.fc2.b", {M});
  params.add_glorot("cls.score.w", {M, C}, M, C, rng);
  params.add_zeros("cls.score.b", {C});
  params.add_glorot("cls.refine.w", {M, 2 * C}, M, 2 * C, rng);
  params.add_zeros("cls.refine.b", {2 * C});
}

RpnOutput rpn_forward(ad::Tape& tape, const FeatureMap& map, const ModelConfig& cfg,
                      const Parameters& params) {
  const std::size_t T = map.frames(), H = map.height();
  const Tensor& window = params.at("rpn.window.w");
  if (window.dim(2) != H) {
    throw std::invalid_argument("rpn_forward: feature map height " + std::to_string(H) +
                                " does not match RPN weights built for height " +
                                std::to_string(window.dim(2)));
  }
  const std::size_t k = cfg.anchors_per_frame();
  Tensor x = ad::reshape(tape, map.values, {T, 1, H});
  x = ad::relu(tape, ad::conv2d(tape, x, window, params.at("rpn.window.b"), {1, 1}));
  x = ad::reshape(tape, x, {T, static_cast<std::size_t>(cfg.rpn_width)});

  RpnOutput out;
  out.frames = T;
  out.anchors_per_frame = k;
  out.scores = ad::reshape(tape, ad::sigmoid(tape, dense(tape, x, params, "rpn.cls")), {T * k});
  out.encodings = ad::reshape(tape, dense(tape, x, params, "rpn.reg"), {T * k, 2});
  return out;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

Tensor smooth_l1(ad::Tape& tape, const Tensor& x) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = smooth_l1(xd[i]);
  if (x.requires_grad()) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double d = std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0);
        gx[i] += g[i] * d;
      }
    });
  }
  return out;
}

Tensor binary_cross_entropy(ad::Tape& tape, const Tensor& p, std::span<const double> targets) {
  if (targets.size() != p.size()) {
    throw std::invalid_argument("binary_cross_entropy: " + std::to_string(targets.size()) +
                                " targets for tensor of shape " + shape_string(p.shape()));
  }
  std::vector<double> y(targets.begin(), targets.end());
  Tensor out(p.shape());
  auto pd = p.data();
  auto od = out.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double q = std::clamp(pd[i], kBceClamp, 1.0 - kBceClamp);
    od[i] = -(y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
  }
  if (p.requires_grad()) {
    tape.record(out, [p, out, y]() mutable {
      auto g = out.grad();
      auto gp = p.grad();
      auto pv = p.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double q = pv[i];
        if (q < kBceClamp || q > 1.0 - kBceClamp) continue;
        gp[i] += g[i] * (q - y[i]) / (q * (1.0 - q));
      }
    });
  }
  return out;
}

LossBreakdown multitask_loss(ad::Tape& tape, const Tensor& scores, const Tensor& encodings,
                             const LossTargets& targets, double lambda) {
  const std::size_t N = scores.dim(0);
  const std::size_t C = scores.rank() == 1 ? 1 : scores.dim(1);
  if (encodings.rank() != 2 || encodings.dim(0) != N || encodings.dim(1) != 2 * C) {
    ad::shape_error("multitask_loss", scores.shape(), encodings.shape());
  }
  if (targets.labels.size() != N || targets.regression.size() != N) {
    throw std::invalid_argument("multitask_loss: expected " + std::to_string(N) +
                                " labels and regression targets");
  }
  std::vector<std::size_t> kept, positives;
  for (std::size_t i = 0; i < N; ++i) {
    const int label = targets.labels[i];
    if (label < 0) continue;
    if (label > static_cast<int>(C)) {
      throw std::invalid_argument("multitask_loss: label " + std::to_string(label) +
                                  " exceeds class count " + std::to_string(C));
    }
    kept.push_back(i);
    if (label > 0) positives.push_back(i);
  }
  if (kept.empty()) throw std::invalid_argument("multitask_loss: every item is ignored");

  LossBreakdown out;
  out.cls_items = kept.size();
  out.reg_items = positives.size();

  std::vector<double> cls_target(kept.size() * C, 0.0);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const int label = targets.labels[kept[j]];
    if (label > 0) cls_target[j * C + static_cast<std::size_t>(label - 1)] = 1.0;
  }
  Tensor p = ad::gather_rows(tape, scores, kept);
  Tensor cls = ad::scale(tape, ad::reduce_sum(tape, binary_cross_entropy(tape, p, cls_target)),
                         1.0 / static_cast<double>(kept.size()));
  out.cls_term = cls.item();
  out.total = cls;

  if (!positives.empty()) {
    const std::size_t P = positives.size();
    Tensor mask(Shape{P, 2 * C}), target(Shape{P, 2 * C});
    for (std::size_t j = 0; j < P; ++j) {
      const auto c = static_cast<std::size_t>(targets.labels[positives[j]] - 1);
      const ParamEncoding& t = targets.regression[positives[j]];
      mask.data()[j * 2 * C + 2 * c] = 1.0;
      mask.data()[j * 2 * C + 2 * c + 1] = 1.0;
      target.data()[j * 2 * C + 2 * c] = t.center_shift;
      target.data()[j * 2 * C + 2 * c + 1] = t.log_length_ratio;
    }
    Tensor t = ad::gather_rows(tape, encodings, positives);
    if (C > 1) t = ad::mul(tape, t, mask);
    Tensor reg = ad::scale(tape, ad::reduce_sum(tape, smooth_l1(tape, ad::sub(tape, t, target))),
                           1.0 / static_cast<double>(P));
    out.reg_term = reg.item();
    out.total = ad::add(tape, cls, ad::scale(tape, reg, lambda));
  }
  return out;
}

namespace {

ParamEncoding clamped(ParamEncoding t) {
  t.log_length_ratio = std::clamp(t.log_length_ratio, -kMaxLogLengthRatio, kMaxLogLengthRatio);
  return t;
}

}  // namespace

std::vector<Proposal> propose(const RpnOutput& rpn, std::span<const Anchor> anchors,
                              std::size_t top_n, double nms_thresh) {
  if (anchors.size() != rpn.size()) {
    throw std::invalid_argument("propose: " + std::to_string(anchors.size()) + " anchors for " +
                                std::to_string(rpn.size()) + " RPN outputs");
  }
  const double T = static_cast<double>(rpn.frames);
  std::vector<Proposal> candidates;
  candidates.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Interval box = decode(clamped(rpn.encoding(i)), anchors[i].interval());
    const double lo = std::clamp(box.onset(), 0.0, T);
    const double hi = std::clamp(box.offset(), 0.0, T);
    if (hi - lo < 0.1) continue;
    candidates.push_back({Interval(lo, hi), rpn.scores[i]});
  }
  std::vector<Proposal> kept = nms(candidates, nms_thresh);
  if (kept.size() > top_n) kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(top_n), kept.end());
  return kept;
}

ClassifierOutput classify_proposals(ad::Tape& tape, const FeatureMap& map,
                                    std::span<const Interval> proposals, const ModelConfig& cfg,
                                    const Parameters& params, bool train, std::mt19937_64& rng) {
  const std::size_t P = proposals.size();
  Tensor pooled = roi_pool(tape, map.values, proposals, cfg.roi_bins);
  Tensor x = ad::reshape(tape, pooled, {P, cfg.roi_bins * map.height()});
  x = ad::relu(tape, dense(tape, x, params, "cls.fc1"));
  x = ad::relu(tape, dense(tape, x, params, "cls.fc2"));
  x = ad::dropout(tape, x, cfg.dropout, train, rng);
  return {ad::sigmoid(tape, dense(tape, x, params, "cls.score")),
          dense(tape, x, params, "cls.refine")};
}

std::vector<Detection> select_detections(std::span<const double> probabilities,
                                         std::span<const double> encodings,
                                         std::span<const Interval> proposals,
                                         std::size_t num_classes,
                                         const SelectionOptions& opt) {
  const std::size_t P = proposals.size(), C = num_classes;
  if (probabilities.size() != P * C || encodings.size() != 2 * P * C) {
    throw std::invalid_argument("select_detections: output sizes do not match " +
                                std::to_string(P) + " proposals x " + std::to_string(C) +
                                " classes");
  }
  std::vector<Detection> out;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<Proposal> candidates;
    for (std::size_t p = 0; p < P; ++p) {
      const double prob = probabilities[p * C + c];
      if (prob < opt.prob_thresh) continue;
      const ParamEncoding t{encodings[p * 2 * C + 2 * c], encodings[p * 2 * C + 2 * c + 1]};
      const Interval frames = decode(clamped(t), proposals[p]);
      const double lo = std::clamp(frames.onset() * opt.frame_shift_s, 0.0, opt.duration_s);
      const double hi = std::clamp(frames.offset() * opt.frame_shift_s, 0.0, opt.duration_s);
      if (!(lo < hi)) continue;
      candidates.push_back({Interval(lo, hi, TimeUnit::seconds), prob});
    }
    for (std::size_t i : nms_indices(candidates, opt.nms_thresh)) {
      out.push_back({candidates[i].interval, static_cast<int>(c), candidates[i].score});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.interval.onset() != b.interval.onset()) return a.interval.onset() < b.interval.onset();
    return a.class_id < b.class_id;
  });
  if (opt.single_event && out.size() > 1) out.erase(out.begin() + 1, out.end());
  return out;
}

}  // namespace rcrnn
