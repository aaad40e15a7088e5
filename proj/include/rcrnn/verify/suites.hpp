// SPDX-License-Identifier: Apache-2.0
//
// Verification suites shared by the test binaries and `rcrnn selfcheck`.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace rcrnn::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured quantity (error, mismatch count, ...)
  std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradEps = 1e-5;

/// Analytic vs central-difference gradients for every primitive, the losses,
/// the composed RPN + classifier loss on a 10-frame map, and a tiny backbone.
/// Inputs are drawn away from relu / max / smooth-L1 kinks.
std::vector<CheckResult> gradient_suite(double tolerance = kGradTolerance);

/// Fast NMS vs brute_force_nms on seeded instances of up to 20 intervals.
CheckResult nms_oracle_suite(std::size_t instances = 1000, std::uint64_t seed = 1);

/// decode(encode(gt, a), a) == gt on seeded random pairs.
CheckResult roundtrip_suite(std::size_t pairs = 100000, std::uint64_t seed = 2,
                            double tolerance = 1e-9);

/// Hand-worked matching and scoring cases.
std::vector<CheckResult> metric_hand_cases();

/// match_events vs exhaustive_max_matching on seeded instances with up to
/// four references and four detections.
CheckResult matching_oracle_suite(std::size_t instances = 5000, std::uint64_t seed = 3);

/// Runs every suite above, printing one PASS/FAIL line each. True when all pass.
bool run_selfcheck(std::ostream& os);

}  // namespace rcrnn::verify
