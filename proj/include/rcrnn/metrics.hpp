// SPDX-License-Identifier: Apache-2.0
//
// Event-based error rate and F1 under an onset-only collar.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcrnn/manifest.hpp"

namespace rcrnn {

inline constexpr double kDefaultCollarS = 0.5;

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t insertions = 0;  // unmatched detections
  std::size_t deletions = 0;   // unmatched references
  std::size_t references = 0;

  MatchCounts& operator+=(const MatchCounts& o);
};

struct MatchResult {
  MatchCounts counts;
  /// (reference index, detection index) in the caller's input order.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// One-to-one matching of onsets (same clip, same class). References are
/// visited in onset order and each takes the closest free detection within
/// the collar (ties to the earlier detection). References left unmatched then
/// try augmenting paths in the same preference order, so the result always
/// has maximum cardinality. Offsets are ignored.
MatchResult match_events(const std::vector<double>& reference_onsets,
                         const std::vector<double>& detection_onsets,
                         double collar_s = kDefaultCollarS);

struct EventScores {
  std::optional<double> error_rate;  // undefined without references
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  MatchCounts counts;
};

EventScores event_scores(const MatchCounts& counts);

struct EvaluationReport {
  std::map<std::string, EventScores> per_class;
  /// Unweighted mean over classes; ER averages only classes where it is defined.
  std::optional<double> average_error_rate;
  double average_f1 = 0.0;
};

/// Pairs records by audio path. Both manifests must list the same clips;
/// otherwise throws naming the first clip that has no counterpart.
EvaluationReport evaluate(const std::vector<ManifestRecord>& references,
                          const std::vector<ManifestRecord>& detections,
                          double collar_s = kDefaultCollarS);

/// {"<class>": {"ER", "F1", "precision", "recall", "TP", "D", "I", "N"}, ...,
///  "average": {"ER", "F1"}}; an undefined ER is written as null.
std::string report_to_json(const EvaluationReport& report);

}  // namespace rcrnn
