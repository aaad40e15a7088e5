// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "rcrnn/metrics.hpp"
#include "rcrnn/verify/oracles.hpp"
#include "rcrnn/verify/suites.hpp"

using namespace rcrnn;

namespace {

ManifestRecord rec(const std::string& audio, std::vector<std::pair<double, double>> spans,
                   const std::string& label = "tone") {
  ManifestRecord r{audio, {}};
  for (auto [on, off] : spans) r.events.push_back({label, on, off, std::nullopt});
  return r;
}

}  // namespace

TEST_CASE("hand-worked matching and scoring cases") {
  for (const auto& r : verify::metric_hand_cases()) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("collar boundary is inclusive and offsets are ignored") {
  const auto m = match_events({1.0}, {1.5});
  CHECK(m.counts.tp == 1);
  CHECK(match_events({1.0}, {1.5001}).counts.tp == 0);
  CHECK(match_events({1.0}, {0.5}).counts.tp == 1);
  CHECK_THROWS_AS(match_events({1.0}, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("greedy nearest choice is repaired to maximum cardinality") {
  // Ref 0 prefers det 1 (distance 0.1) but det 1 is ref 1's only option.
  const auto m = match_events({1.0, 1.5}, {0.6, 1.1});
  CHECK(m.counts.tp == 2);
  CHECK(m.counts.insertions == 0);
  CHECK(m.counts.deletions == 0);
}

TEST_CASE("matching agrees with exhaustive search") {
  const auto r = verify::matching_oracle_suite(2000, 21);
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("matching invariants") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> n(0, 6);
  for (int k = 0; k < 300; ++k) {
    std::vector<double> ref(static_cast<std::size_t>(n(rng))), det(static_cast<std::size_t>(n(rng)));
    for (double& v : ref) v = u(rng);
    for (double& v : det) v = u(rng);
    const auto base = match_events(ref, det);
    CHECK(base.counts.tp + base.counts.deletions == ref.size());
    CHECK(base.counts.tp + base.counts.insertions == det.size());
    CHECK(base.counts.references == ref.size());
    // A common time shift changes nothing.
    auto sr = ref, sd = det;
    for (double& v : sr) v += 3.25;
    for (double& v : sd) v += 3.25;
    CHECK(match_events(sr, sd).counts.tp == base.counts.tp);
    // Nor does the order the events are listed in.
    std::shuffle(ref.begin(), ref.end(), rng);
    std::shuffle(det.begin(), det.end(), rng);
    CHECK(match_events(ref, det).counts.tp == base.counts.tp);
    // Pairs respect the collar and are one-to-one.
    std::vector<int> used_r(ref.size()), used_d(det.size());
    for (auto [i, j] : match_events(ref, det).pairs) {
      CHECK(std::abs(ref[i] - det[j]) <= 0.5 + 1e-9);
      CHECK(++used_r[i] == 1);
      CHECK(++used_d[j] == 1);
    }
  }
}

TEST_CASE("error rate is zero exactly when nothing is missed or inserted") {
  MatchCounts c;
  c.tp = 3;
  c.references = 3;
  auto s = event_scores(c);
  REQUIRE(s.error_rate.has_value());
  CHECK(*s.error_rate == 0.0);
  CHECK(s.f1 == 1.0);
  c.insertions = 1;
  s = event_scores(c);
  CHECK(*s.error_rate == doctest::Approx(1.0 / 3.0));
  CHECK(s.precision == 0.75);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == doctest::Approx(2 * 0.75 / 1.75));
  MatchCounts none;
  none.insertions = 2;
  const auto e = event_scores(none);
  CHECK_FALSE(e.error_rate.has_value());
  CHECK(e.f1 == 0.0);
}

TEST_CASE("evaluation over manifests") {
  const std::vector<ManifestRecord> refs{rec("a.wav", {{1.0, 2.0}}), rec("b.wav", {}),
                                         rec("c.wav", {{3.0, 4.0}, {6.0, 7.0}})};
  const auto same = evaluate(refs, refs);
  CHECK(*same.per_class.at("tone").error_rate == 0.0);
  CHECK(same.per_class.at("tone").f1 == 1.0);
  CHECK(*same.average_error_rate == 0.0);

  const std::vector<ManifestRecord> dets{rec("c.wav", {{3.2, 3.9}}), rec("b.wav", {{0.1, 0.5}}),
                                         rec("a.wav", {{1.4, 2.5}})};
  const auto r = evaluate(refs, dets);
  const auto& s = r.per_class.at("tone");
  CHECK(s.counts.tp == 2);
  CHECK(s.counts.deletions == 1);
  CHECK(s.counts.insertions == 1);
  CHECK(*s.error_rate == doctest::Approx(2.0 / 3.0));

  const std::vector<ManifestRecord> missing{rec("a.wav", {}), rec("b.wav", {})};
  CHECK_THROWS_WITH_AS(evaluate(refs, missing), doctest::Contains("c.wav"), std::invalid_argument);
  const std::vector<ManifestRecord> extra{rec("a.wav", {}), rec("b.wav", {}), rec("c.wav", {}),
                                          rec("z.wav", {})};
  CHECK_THROWS_WITH_AS(evaluate(refs, extra), doctest::Contains("z.wav"), std::invalid_argument);
}

TEST_CASE("classes are matched separately") {
  const std::vector<ManifestRecord> refs{rec("a.wav", {{1.0, 2.0}}, "tone")};
  const std::vector<ManifestRecord> dets{rec("a.wav", {{1.0, 2.0}}, "chirp")};
  const auto r = evaluate(refs, dets);
  CHECK(r.per_class.at("tone").counts.deletions == 1);
  CHECK(r.per_class.at("chirp").counts.insertions == 1);
  CHECK_FALSE(r.per_class.at("chirp").error_rate.has_value());
  CHECK(*r.average_error_rate == 1.0);
}

TEST_CASE("report json carries every count") {
  const std::vector<ManifestRecord> refs{rec("a.wav", {{1.0, 2.0}})};
  const auto j = nlohmann::json::parse(report_to_json(evaluate(refs, refs)));
  for (const char* k : {"ER", "F1", "precision", "recall", "TP", "D", "I", "N"}) {
    CHECK(j.at("tone").contains(k));
  }
  CHECK(j.at("tone").at("N") == 1);
  CHECK(j.at("average").at("ER") == 0.0);
  const std::vector<ManifestRecord> empty{rec("a.wav", {})};
  const auto k = nlohmann::json::parse(report_to_json(evaluate(empty, refs)));
  CHECK(k.at("tone").at("ER").is_null());
}
