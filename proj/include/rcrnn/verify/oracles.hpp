// SPDX-License-Identifier: Apache-2.0
//
// Slow, independent reference implementations used to cross-check the fast
// paths in tests and in `rcrnn selfcheck`.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rcrnn/region.hpp"

namespace rcrnn::verify {

/// Kept indices under greedy suppression, computed from pairwise rank counts:
/// rank(i) = #{j : j outranks i}. Items are visited by rank and each is kept
/// unless a kept, higher-ranked item overlaps it by more than `iou_thresh`.
std::vector<std::size_t> brute_force_nms(std::span<const Proposal> proposals, double iou_thresh);

/// Largest number of one-to-one (reference, detection) pairs with
/// |onset difference| <= collar, by exhaustive search.
std::size_t exhaustive_max_matching(const std::vector<double>& reference_onsets,
                                    const std::vector<double>& detection_onsets, double collar_s);

}  // namespace rcrnn::verify
