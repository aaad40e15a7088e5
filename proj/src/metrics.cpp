// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace rcrnn {

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
  tp += o.tp;
  insertions += o.insertions;
  deletions += o.deletions;
  references += o.references;
  return *this;
}

namespace {

std::vector<std::size_t> onset_order(const std::vector<double>& onsets) {
  std::vector<std::size_t> idx(onsets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return onsets[a] < onsets[b]; });
  return idx;
}

}  // namespace

MatchResult match_events(const std::vector<double>& reference_onsets,
                         const std::vector<double>& detection_onsets, double collar_s) {
  if (!(collar_s > 0.0)) throw std::invalid_argument("match_events: collar must be positive");
  const std::vector<std::size_t> refs = onset_order(reference_onsets);
  const std::vector<std::size_t> dets = onset_order(detection_onsets);

  // Candidate detections per reference, nearest onset first, earlier on ties.
  // Small tolerance so that a difference of exactly the collar survives
  // floating-point noise in the subtraction.
  const double reach = collar_s + 1e-9;
  std::vector<std::vector<std::size_t>> candidates(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const double onset = reference_onsets[refs[r]];
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (std::abs(detection_onsets[dets[d]] - onset) <= reach) candidates[r].push_back(d);
    }
    std::stable_sort(candidates[r].begin(), candidates[r].end(), [&](std::size_t a, std::size_t b) {
      return std::abs(detection_onsets[dets[a]] - onset) < std::abs(detection_onsets[dets[b]] - onset);
    });
  }

  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> ref_of(dets.size(), kFree), det_of(refs.size(), kFree);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    for (std::size_t d : candidates[r]) {
      if (ref_of[d] == kFree) {
        ref_of[d] = r;
        det_of[r] = d;
        break;
      }
    }
  }

  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t r) {
    for (std::size_t d : candidates[r]) {
      if (seen[d]) continue;
      seen[d] = 1;
      if (ref_of[d] == kFree || augment(ref_of[d])) {
        ref_of[d] = r;
        det_of[r] = d;
        return true;
      }
    }
    return false;
  };
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (det_of[r] != kFree) continue;
    seen.assign(dets.size(), 0);
    augment(r);
  }

  MatchResult out;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (det_of[r] != kFree) out.pairs.emplace_back(refs[r], dets[det_of[r]]);
  }
  out.counts.references = refs.size();
  out.counts.tp = out.pairs.size();
  out.counts.deletions = refs.size() - out.counts.tp;
  out.counts.insertions = dets.size() - out.counts.tp;
  return out;
}

EventScores event_scores(const MatchCounts& c) {
  EventScores s;
  s.counts = c;
  if (c.references > 0) {
    s.error_rate = static_cast<double>(c.deletions + c.insertions) / static_cast<double>(c.references);
  }
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.insertions > 0) s.precision = tp / static_cast<double>(c.tp + c.insertions);
  if (c.tp + c.deletions > 0) s.recall = tp / static_cast<double>(c.tp + c.deletions);
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

EvaluationReport evaluate(const std::vector<ManifestRecord>& references,
                          const std::vector<ManifestRecord>& detections, double collar_s) {
  std::map<std::string, const ManifestRecord*> det_by_clip;
  for (const auto& d : detections) {
    if (!det_by_clip.emplace(d.audio, &d).second) {
      throw std::invalid_argument("detections list clip '" + d.audio + "' more than once");
    }
  }
  std::set<std::string> ref_clips;
  for (const auto& r : references) {
    if (!ref_clips.insert(r.audio).second) {
      throw std::invalid_argument("references list clip '" + r.audio + "' more than once");
    }
    if (!det_by_clip.count(r.audio)) {
      throw std::invalid_argument("clip '" + r.audio + "' has references but no detection record");
    }
  }
  for (const auto& d : detections) {
    if (!ref_clips.count(d.audio)) {
      throw std::invalid_argument("clip '" + d.audio + "' has detections but no reference record");
    }
  }

  std::map<std::string, MatchCounts> totals;
  for (const auto& r : references) {
    const ManifestRecord& d = *det_by_clip.at(r.audio);
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_class;
    for (const auto& e : r.events) by_class[e.label].first.push_back(e.onset);
    for (const auto& e : d.events) by_class[e.label].second.push_back(e.onset);
    for (const auto& [label, onsets] : by_class) {
      totals[label] += match_events(onsets.first, onsets.second, collar_s).counts;
    }
  }

  EvaluationReport report;
  double er_sum = 0.0, f1_sum = 0.0;
  std::size_t er_n = 0;
  for (const auto& [label, counts] : totals) {
    const EventScores s = event_scores(counts);
    report.per_class[label] = s;
    f1_sum += s.f1;
    if (s.error_rate) {
      er_sum += *s.error_rate;
      ++er_n;
    }
  }
  if (!totals.empty()) report.average_f1 = f1_sum / static_cast<double>(totals.size());
  if (er_n > 0) report.average_error_rate = er_sum / static_cast<double>(er_n);
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  using nlohmann::json;
  json j = json::object();
  for (const auto& [label, s] : report.per_class) {
    j[label] = {{"ER", s.error_rate ? json(*s.error_rate) : json(nullptr)},
                {"F1", s.f1},
                {"precision", s.precision},
                {"recall", s.recall},
                {"TP", s.counts.tp},
                {"D", s.counts.deletions},
                {"I", s.counts.insertions},
                {"N", s.counts.references}};
  }
  j["average"] = {
      {"ER", report.average_error_rate ? json(*report.average_error_rate) : json(nullptr)},
      {"F1", report.average_f1}};
  return j.dump(2);
}

}  // namespace rcrnn
