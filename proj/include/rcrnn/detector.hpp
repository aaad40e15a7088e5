// SPDX-License-Identifier: Apache-2.0
//
// End-to-end composition: spectrogram -> feature map -> RPN -> proposals ->
// classifier, for both the training loss and inference.
#pragma once

#include <cstdint>
#include <vector>

#include "rcrnn/heads.hpp"

namespace rcrnn {

struct EventLabel {
  int class_id = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
};

/// Every parameter group: backbone, pretrain head, RPN, classifier.
Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed);

struct DetectorLoss {
  LossBreakdown rpn;
  LossBreakdown classifier;
  Tensor total;  // rpn.total + classifier.total
  std::size_t proposals = 0;
};

/// Events in feature-map frames, parallel arrays.
struct GroundTruth {
  std::vector<Interval> intervals;
  std::vector<int> classes;
};

/// Both multitask losses on an existing feature map. With `fixed_proposals`
/// the RPN's own proposals are replaced, which keeps the loss a smooth
/// function of the map (used by gradient checks).
DetectorLoss detector_loss_on_map(ad::Tape& tape, const FeatureMap& map,
                                  const GroundTruth& truth, const ModelConfig& cfg,
                                  const Parameters& params, bool train, std::mt19937_64& rng,
                                  const std::vector<Interval>* fixed_proposals = nullptr);

/// Anchors labeled against the events (in feature-map frames) and sampled to
/// at most rpn_pos_samples / rpn_neg_samples; classifier items are the RPN
/// proposals plus the ground-truth intervals, labeled at cls_pos_iou.
DetectorLoss detector_loss(ad::Tape& tape, const Spectrogram& spec,
                           const std::vector<EventLabel>& events, const ModelConfig& cfg,
                           const Parameters& params, bool train, std::uint64_t sample_seed);

/// Labels for the RPN loss; exposed for tests.
LossTargets rpn_targets(std::span<const Anchor> anchors, std::span<const Interval> gt_frames,
                        const ModelConfig& cfg, std::mt19937_64& rng);

std::vector<Detection> detect(const Spectrogram& spec, double duration_s, const ModelConfig& cfg,
                              const Parameters& params, bool single_event);

}  // namespace rcrnn
