// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace rcrnn::verify {

namespace {

// Strict priority used by NMS: higher score, then earlier onset, then lower
// input index.
bool outranks(std::span<const Proposal> p, std::size_t a, std::size_t b) {
  if (p[a].score != p[b].score) return p[a].score > p[b].score;
  if (p[a].interval.onset() != p[b].interval.onset()) {
    return p[a].interval.onset() < p[b].interval.onset();
  }
  return a < b;
}

}  // namespace

std::vector<std::size_t> brute_force_nms(std::span<const Proposal> proposals, double iou_thresh) {
  const std::size_t n = proposals.size();
  std::vector<std::size_t> by_rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) rank += (j != i && outranks(proposals, j, i)) ? 1 : 0;
    by_rank[rank] = i;
  }
  std::vector<char> kept(n, 0);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = by_rank[r];
    bool suppressed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (kept[j] && iou(proposals[i].interval, proposals[j].interval) > iou_thresh) {
        suppressed = true;
      }
    }
    if (!suppressed) {
      kept[i] = 1;
      out.push_back(i);
    }
  }
  return out;
}

std::size_t exhaustive_max_matching(const std::vector<double>& reference_onsets,
                                    const std::vector<double>& detection_onsets, double collar_s) {
  std::vector<char> used(detection_onsets.size(), 0);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t r) -> std::size_t {
    if (r == reference_onsets.size()) return 0;
    std::size_t top = best(r + 1);  // leave r unmatched
    for (std::size_t d = 0; d < detection_onsets.size(); ++d) {
      if (used[d] || std::abs(detection_onsets[d] - reference_onsets[r]) > collar_s + 1e-9) continue;
      used[d] = 1;
      top = std::max(top, 1 + best(r + 1));
      used[d] = 0;
    }
    return top;
  };
  return best(0);
}

}  // namespace rcrnn::verify
