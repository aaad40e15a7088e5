// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/region.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rcrnn {

Interval::Interval(double onset, double offset, TimeUnit unit)
    : onset_(onset), offset_(offset), unit_(unit) {
  if (!std::isfinite(onset) || !std::isfinite(offset) || !(onset < offset)) {
    throw std::invalid_argument("invalid interval [" + std::to_string(onset) + ", " +
                                std::to_string(offset) + ")");
  }
}

Interval Interval::from_center(double center, double length, TimeUnit unit) {
  return Interval(center - 0.5 * length, center + 0.5 * length, unit);
}

Interval Anchor::interval() const {
  return Interval::from_center(static_cast<double>(position) + 0.5, size);
}

std::vector<Anchor> make_anchors(std::size_t frames, std::span<const double> sizes) {
  std::vector<Anchor> out;
  out.reserve(frames * sizes.size());
  for (std::size_t p = 0; p < frames; ++p) {
    for (double s : sizes) {
      if (!(s > 0.0)) throw std::invalid_argument("anchor sizes must be positive");
      out.push_back({p, s});
    }
  }
  return out;
}

double iou(const Interval& a, const Interval& b) {
  if (a.unit() != b.unit()) throw std::invalid_argument("iou: interval units differ");
  const double inter =
      std::max(0.0, std::min(a.offset(), b.offset()) - std::max(a.onset(), b.onset()));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

ParamEncoding encode(const Interval& gt, const Interval& anchor) {
  return {(gt.center() - anchor.center()) / anchor.length(),
          std::log(gt.length() / anchor.length())};
}

Interval decode(const ParamEncoding& t, const Interval& anchor) {
  if (!std::isfinite(t.center_shift) || !std::isfinite(t.log_length_ratio)) {
    throw std::invalid_argument("decode: non-finite encoding");
  }
  const double center = anchor.center() + t.center_shift * anchor.length();
  const double length = anchor.length() * std::exp(t.log_length_ratio);
  return Interval::from_center(center, length, anchor.unit());
}

std::vector<AnchorAssignment> assign_labels(std::span<const Interval> anchors,
                                            std::span<const Interval> ground_truth,
                                            double pos_thresh, double neg_thresh) {
  if (!(neg_thresh >= 0.0 && neg_thresh <= pos_thresh && pos_thresh <= 1.0)) {
    throw std::invalid_argument("assign_labels: need 0 <= neg <= pos <= 1");
  }
  std::vector<AnchorAssignment> out(anchors.size());
  if (ground_truth.empty()) return out;

  std::vector<double> best_for_gt(ground_truth.size(), -1.0);
  std::vector<std::size_t> best_anchor(ground_truth.size(), 0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double v = iou(anchors[a], ground_truth[g]);
      if (v > best) {
        best = v;
        arg = g;
      }
      if (v > best_for_gt[g]) {
        best_for_gt[g] = v;
        best_anchor[g] = a;
      }
    }
    auto& asg = out[a];
    asg.best_iou = best;
    if (best >= pos_thresh) {
      asg.label = AnchorLabel::positive;
      asg.matched = arg;
    } else if (best < neg_thresh) {
      asg.label = AnchorLabel::negative;
    } else {
      asg.label = AnchorLabel::ignore;
    }
  }
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    if (best_for_gt[g] <= 0.0) continue;  // gt lies outside every anchor
    auto& asg = out[best_anchor[g]];
    if (asg.label != AnchorLabel::positive) {
      asg.label = AnchorLabel::positive;
      // Carry the anchor's own best match, which may be another gt on ties.
      double best = -1.0;
      for (std::size_t h = 0; h < ground_truth.size(); ++h) {
        const double v = iou(anchors[best_anchor[g]], ground_truth[h]);
        if (v > best) {
          best = v;
          asg.matched = h;
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> nms_indices(std::span<const Proposal> proposals, double iou_thresh) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = proposals[a];
    const auto& pb = proposals[b];
    if (pa.score != pb.score) return pa.score > pb.score;
    if (pa.interval.onset() != pb.interval.onset()) {
      return pa.interval.onset() < pb.interval.onset();
    }
    return a < b;
  });
  std::vector<char> suppressed(proposals.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t cur = order[i];
    if (suppressed[cur]) continue;
    keep.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t other = order[j];
      if (!suppressed[other] &&
          iou(proposals[cur].interval, proposals[other].interval) > iou_thresh) {
        suppressed[other] = 1;
      }
    }
  }
  return keep;
}

std::vector<Proposal> nms(std::span<const Proposal> proposals, double iou_thresh) {
  std::vector<Proposal> out;
  for (std::size_t i : nms_indices(proposals, iou_thresh)) out.push_back(proposals[i]);
  return out;
}

std::size_t RoiBins::bin_begin(std::size_t bin, std::size_t bins) const {
  return start + (bin * length) / bins;
}

std::size_t RoiBins::bin_end(std::size_t bin, std::size_t bins) const {
  const std::size_t lo = (bin * length) / bins;
  const std::size_t hi = ((bin + 1) * length) / bins;
  return start + std::max(hi, lo + 1);
}

RoiBins roi_bins(const Interval& interval, std::size_t frames) {
  const double lo = std::max(interval.onset(), 0.0);
  const double hi = std::min(interval.offset(), static_cast<double>(frames));
  if (!(lo < hi)) {
    throw std::invalid_argument("roi_pool: interval [" + std::to_string(interval.onset()) +
                                ", " + std::to_string(interval.offset()) +
                                ") does not overlap the " + std::to_string(frames) +
                                "-frame map");
  }
  const auto start = static_cast<std::size_t>(std::floor(lo));
  const auto end = std::min(frames, static_cast<std::size_t>(std::ceil(hi)));
  return {start, std::max<std::size_t>(end - start, 1)};
}

Tensor roi_pool(ad::Tape& tape, const Tensor& map, std::span<const Interval> intervals,
                std::size_t bins) {
  if (map.rank() != 2) {
    throw std::invalid_argument("roi_pool: map must be (T, H), got " +
                                shape_string(map.shape()));
  }
  if (intervals.empty() || bins == 0) {
    throw std::invalid_argument("roi_pool: need at least one interval and one bin");
  }
  const std::size_t T = map.dim(0), H = map.dim(1), P = intervals.size();
  Tensor out(Shape{P, bins, H});
  std::vector<std::size_t> argmax(out.size());
  auto md = map.data();
  auto od = out.data();
  for (std::size_t p = 0; p < P; ++p) {
    const RoiBins rb = roi_bins(intervals[p], T);
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t lo = rb.bin_begin(b, bins), hi = rb.bin_end(b, bins);
      for (std::size_t h = 0; h < H; ++h) {
        std::size_t arg = lo * H + h;
        for (std::size_t t = lo + 1; t < hi; ++t) {
          if (md[t * H + h] > md[arg]) arg = t * H + h;
        }
        const std::size_t o = (p * bins + b) * H + h;
        od[o] = md[arg];
        argmax[o] = arg;
      }
    }
  }
  if (map.requires_grad()) {
    tape.record(out, [map, out, argmax]() mutable {
      auto g = out.grad();
      auto gm = map.grad();
      for (std::size_t o = 0; o < g.size(); ++o) gm[argmax[o]] += g[o];
    });
  }
  return out;
}

}  // namespace rcrnn
