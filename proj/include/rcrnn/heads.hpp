// SPDX-License-Identifier: Apache-2.0
//
// RPN head, proposal-refining classifier, the joint classification +
// localization loss both are trained with, and detection selection.
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "rcrnn/autodiff.hpp"
#include "rcrnn/backbone.hpp"
#include "rcrnn/region.hpp"

namespace rcrnn {

struct RpnOutput {
  Tensor scores;     // (T' * k) objectness in [0, 1]
  Tensor encodings;  // (T' * k, 2) as (t_c, t_l), anchor-ordered
  std::size_t frames = 0;
  std::size_t anchors_per_frame = 0;

  std::size_t size() const { return frames * anchors_per_frame; }
  ParamEncoding encoding(std::size_t i) const {
    return {encodings[2 * i], encodings[2 * i + 1]};
  }
};

void add_rpn_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng);
void add_classifier_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng);

/// Kernel-3 full-height temporal conv to rpn_width channels, relu, then
/// sibling sigmoid (k per frame) and linear (2k per frame) outputs.
RpnOutput rpn_forward(ad::Tape& tape, const FeatureMap& map, const ModelConfig& cfg,
                      const Parameters& params);

double smooth_l1(double x);

/// Elementwise smooth-L1, autodiff-aware.
Tensor smooth_l1(ad::Tape& tape, const Tensor& x);

/// Elementwise binary cross-entropy of probabilities p against 0/1 targets,
/// p clamped to [kBceClamp, 1 - kBceClamp].
inline constexpr double kBceClamp = 1e-7;
Tensor binary_cross_entropy(ad::Tape& tape, const Tensor& p, std::span<const double> targets);

/// Per-item training targets for the joint loss.
/// label: -1 ignore, 0 background, c + 1 positive for class c.
struct LossTargets {
  std::vector<int> labels;
  std::vector<ParamEncoding> regression;  // used where label > 0
};

struct LossBreakdown {
  Tensor total;  // scalar on the tape
  double cls_term = 0.0;
  double reg_term = 0.0;
  std::size_t cls_items = 0;
  std::size_t reg_items = 0;
};

/// total = mean_i BCE(p_i, p_i*) + lambda * mean_{i: p_i* = 1} smoothL1(t_i - t_i*).
/// scores: (N) or (N, C); encodings: (N, 2) or (N, 2C). Ignored items never
/// enter the graph. Throws when every item is ignored.
LossBreakdown multitask_loss(ad::Tape& tape, const Tensor& scores, const Tensor& encodings,
                             const LossTargets& targets, double lambda);

/// Largest |t_l| accepted when decoding predicted encodings.
inline constexpr double kMaxLogLengthRatio = 4.135166556742356;  // ln(1000/16)

/// Decode, clip to [0, T'], drop intervals shorter than 0.1 frame, NMS,
/// keep the top_n highest-scoring survivors.
std::vector<Proposal> propose(const RpnOutput& rpn, std::span<const Anchor> anchors,
                              std::size_t top_n, double nms_thresh);

struct ClassifierOutput {
  Tensor probabilities;  // (P, C)
  Tensor encodings;      // (P, 2C)
};

/// RoI pool -> flatten -> dense(M) relu -> dense(M) relu -> dropout ->
/// sigmoid per class and 2 regression outputs per class.
ClassifierOutput classify_proposals(ad::Tape& tape, const FeatureMap& map,
                                    std::span<const Interval> proposals, const ModelConfig& cfg,
                                    const Parameters& params, bool train, std::mt19937_64& rng);

struct Detection {
  Interval interval;  // seconds
  int class_id = 0;
  double probability = 0.0;
};

struct SelectionOptions {
  double prob_thresh = 0.8;
  double nms_thresh = 0.3;
  bool single_event = false;
  double frame_shift_s = 0.0;
  double duration_s = 0.0;
};

/// Threshold, refine against each proposal, convert to seconds, per-class
/// NMS, optional single-event cap, clip to the clip duration. Output is
/// sorted by descending probability.
std::vector<Detection> select_detections(std::span<const double> probabilities,
                                         std::span<const double> encodings,
                                         std::span<const Interval> proposals,
                                         std::size_t num_classes,
                                         const SelectionOptions& opt);

}  // namespace rcrnn
