// SPDX-License-Identifier: Apache-2.0
//
// 1D interval geometry shared by the proposal and detection stages.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rcrnn/autodiff.hpp"

namespace rcrnn {

enum class TimeUnit { seconds, frames };

class Interval {
 public:
  /// Throws std::invalid_argument unless onset < offset and both are finite.
  Interval(double onset, double offset, TimeUnit unit = TimeUnit::frames);

  double onset() const { return onset_; }
  double offset() const { return offset_; }
  TimeUnit unit() const { return unit_; }
  double center() const { return 0.5 * (onset_ + offset_); }
  double length() const { return offset_ - onset_; }

  static Interval from_center(double center, double length,
                              TimeUnit unit = TimeUnit::frames);

  bool operator==(const Interval&) const = default;

 private:
  double onset_;
  double offset_;
  TimeUnit unit_;
};

struct Anchor {
  std::size_t position = 0;  // feature-map frame
  double size = 1.0;         // frames

  /// Centered at position + 0.5.
  Interval interval() const;
};

struct ParamEncoding {
  double center_shift = 0.0;      // (c_gt - c_a) / l_a
  double log_length_ratio = 0.0;  // ln(l_gt / l_a)
};

enum class AnchorLabel { negative, positive, ignore };

struct AnchorAssignment {
  AnchorLabel label = AnchorLabel::negative;
  std::optional<std::size_t> matched;  // ground-truth index, set when positive
  double best_iou = 0.0;
};

struct Proposal {
  Interval interval;
  double score = 0.0;
};

/// Position-major, size-minor: anchor (p, s) sits at index p * |sizes| + s.
std::vector<Anchor> make_anchors(std::size_t frames, std::span<const double> sizes);

/// 1D Jaccard overlap. Throws std::invalid_argument on unit mismatch.
double iou(const Interval& a, const Interval& b);

ParamEncoding encode(const Interval& gt, const Interval& anchor);
Interval decode(const ParamEncoding& t, const Interval& anchor);

/// Positive when IoU >= pos_thresh with some ground truth, or when the anchor
/// is the best match of some ground truth (ties to the lower anchor index);
/// negative when max IoU < neg_thresh; ignore otherwise.
std::vector<AnchorAssignment> assign_labels(std::span<const Interval> anchors,
                                            std::span<const Interval> ground_truth,
                                            double pos_thresh = 0.7,
                                            double neg_thresh = 0.3);

/// Greedy NMS; returns indices into `proposals` ordered by descending score.
/// Score ties go to the earlier onset, then the lower index.
std::vector<std::size_t> nms_indices(std::span<const Proposal> proposals, double iou_thresh);
std::vector<Proposal> nms(std::span<const Proposal> proposals, double iou_thresh);

/// Frame range [begin, end) pooled into bin `bin` of `bins` for an interval
/// clipped to [0, frames). Throws when the interval misses the map.
struct RoiBins {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t bin_begin(std::size_t bin, std::size_t bins) const;
  std::size_t bin_end(std::size_t bin, std::size_t bins) const;
};
RoiBins roi_bins(const Interval& interval, std::size_t frames);

/// Max-pools each interval of a (T, H) map into `bins` rows -> (P, bins, H).
/// Gradients flow to the map at the argmax positions.
Tensor roi_pool(ad::Tape& tape, const Tensor& map, std::span<const Interval> intervals,
                std::size_t bins = 7);

}  // namespace rcrnn
