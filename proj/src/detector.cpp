// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/detector.hpp"

#include <algorithm>
#include <stdexcept>

namespace rcrnn {

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Parameters params;
  add_backbone_params(params, cfg, rng);
  add_pretrain_head_params(params, cfg, rng);
  add_rpn_params(params, cfg, rng);
  add_classifier_params(params, cfg, rng);
  return params;
}

namespace {

GroundTruth gt_in_frames(const std::vector<EventLabel>& events, double frame_shift_s,
                         std::size_t frames) {
  GroundTruth out;
  const double T = static_cast<double>(frames);
  for (const auto& e : events) {
    const double lo = std::clamp(e.onset_s / frame_shift_s, 0.0, T);
    const double hi = std::clamp(e.offset_s / frame_shift_s, 0.0, T);
    if (lo < hi) {
      out.intervals.emplace_back(lo, hi);
      out.classes.push_back(e.class_id);
    }
  }
  return out;
}

template <class T>
void shuffle_prefix(std::vector<T>& v, std::size_t keep, std::mt19937_64& rng) {
  // Partial Fisher-Yates; the first `keep` entries become a uniform sample.
  keep = std::min(keep, v.size());
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
  v.resize(keep);
}

}  // namespace

LossTargets rpn_targets(std::span<const Anchor> anchors, std::span<const Interval> gt_frames,
                        const ModelConfig& cfg, std::mt19937_64& rng) {
  std::vector<Interval> boxes;
  boxes.reserve(anchors.size());
  for (const auto& a : anchors) boxes.push_back(a.interval());
  const auto assignment = assign_labels(boxes, gt_frames, cfg.rpn_pos_iou, cfg.rpn_neg_iou);

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i].label == AnchorLabel::positive) pos.push_back(i);
    if (assignment[i].label == AnchorLabel::negative) neg.push_back(i);
  }
  shuffle_prefix(pos, static_cast<std::size_t>(cfg.rpn_pos_samples), rng);
  shuffle_prefix(neg, static_cast<std::size_t>(cfg.rpn_neg_samples), rng);

  LossTargets targets;
  targets.labels.assign(anchors.size(), -1);
  targets.regression.assign(anchors.size(), ParamEncoding{});
  for (std::size_t i : neg) targets.labels[i] = 0;
  for (std::size_t i : pos) {
    targets.labels[i] = 1;
    targets.regression[i] = encode(gt_frames[*assignment[i].matched], boxes[i]);
  }
  return targets;
}

DetectorLoss detector_loss_on_map(ad::Tape& tape, const FeatureMap& map,
                                  const GroundTruth& truth, const ModelConfig& cfg,
                                  const Parameters& params, bool train, std::mt19937_64& rng,
                                  const std::vector<Interval>* fixed_proposals) {
  const auto& gt = truth.intervals;
  if (truth.classes.size() != gt.size()) {
    throw std::invalid_argument("detector loss: " + std::to_string(gt.size()) + " intervals but " +
                                std::to_string(truth.classes.size()) + " class ids");
  }
  RpnOutput rpn = rpn_forward(tape, map, cfg, params);
  const auto anchors = make_anchors(map.frames(), cfg.anchor_sizes);
  DetectorLoss out;
  out.rpn = multitask_loss(tape, rpn.scores, rpn.encodings, rpn_targets(anchors, gt, cfg, rng),
                           cfg.lambda);

  std::vector<Interval> boxes;
  if (fixed_proposals) {
    boxes = *fixed_proposals;
  } else {
    for (const auto& p : propose(rpn, anchors, static_cast<std::size_t>(cfg.top_n),
                                 cfg.proposal_nms)) {
      boxes.push_back(p.interval);
    }
  }
  boxes.insert(boxes.end(), gt.begin(), gt.end());
  out.proposals = boxes.size();
  if (boxes.empty()) {
    // Nothing survived proposal filtering and the clip has no events.
    out.total = out.rpn.total;
    return out;
  }

  const auto assignment = assign_labels(boxes, gt, cfg.cls_pos_iou, cfg.cls_neg_iou);
  LossTargets targets;
  targets.labels.assign(boxes.size(), 0);
  targets.regression.assign(boxes.size(), ParamEncoding{});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& a = assignment[i];
    if (a.label == AnchorLabel::positive) {
      targets.labels[i] = truth.classes[*a.matched] + 1;
      targets.regression[i] = encode(gt[*a.matched], boxes[i]);
    } else if (a.label == AnchorLabel::ignore) {
      targets.labels[i] = -1;
    }
  }
  ClassifierOutput cls = classify_proposals(tape, map, boxes, cfg, params, train, rng);
  out.classifier = multitask_loss(tape, cls.probabilities, cls.encodings, targets, cfg.lambda);
  out.total = ad::add(tape, out.rpn.total, out.classifier.total);
  return out;
}

DetectorLoss detector_loss(ad::Tape& tape, const Spectrogram& spec,
                           const std::vector<EventLabel>& events, const ModelConfig& cfg,
                           const Parameters& params, bool train, std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  FeatureMap map = extract_features(tape, spec, cfg, params);
  const GroundTruth truth = gt_in_frames(events, map.frame_shift_s, map.frames());
  return detector_loss_on_map(tape, map, truth, cfg, params, train, rng);
}

std::vector<Detection> detect(const Spectrogram& spec, double duration_s, const ModelConfig& cfg,
                              const Parameters& params, bool single_event) {
  ad::Tape tape;
  tape.set_enabled(false);
  std::mt19937_64 unused(0);
  FeatureMap map = extract_features(tape, spec, cfg, params);
  RpnOutput rpn = rpn_forward(tape, map, cfg, params);
  const auto anchors = make_anchors(map.frames(), cfg.anchor_sizes);
  std::vector<Interval> boxes;
  for (const auto& p : propose(rpn, anchors, static_cast<std::size_t>(cfg.top_n),
                               cfg.proposal_nms)) {
    boxes.push_back(p.interval);
  }
  if (boxes.empty()) return {};
  ClassifierOutput cls = classify_proposals(tape, map, boxes, cfg, params, false, unused);
  SelectionOptions opt;
  opt.prob_thresh = cfg.detection_threshold;
  opt.nms_thresh = cfg.detection_nms;
  opt.single_event = single_event;
  opt.frame_shift_s = map.frame_shift_s;
  opt.duration_s = duration_s;
  return select_detections(cls.probabilities.data(), cls.encodings.data(), boxes,
                           static_cast<std::size_t>(cfg.num_classes), opt);
}

}  // namespace rcrnn
