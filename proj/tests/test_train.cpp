// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rcrnn/synth.hpp"
#include "rcrnn/train.hpp"

using namespace rcrnn;

namespace {

ModelConfig tiny_model(RnnType rnn = RnnType::bigru) {
  ModelConfig c;
  c.units = 3;
  c.dense_width = 6;
  c.rnn_type = rnn;
  c.channels = {2, 2, 2};
  c.projection_width = 4;
  c.rpn_width = 4;
  c.class_names = {"tone"};
  return c;
}

std::vector<Example> tiny_data(std::size_t n, double occurrence, std::uint64_t seed) {
  SynthSpec s;
  s.clip_len_s = 2.5;
  s.sample_rate_hz = 16000;
  s.occurrence_prob = occurrence;
  s.seed = seed;
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = clip_rng(seed, i);
    const LabeledClip c = synthesize_clip(s, rng);
    Example ex;
    ex.audio = "clip" + std::to_string(i);
    ex.duration_s = c.clip.duration_s();
    ex.spec = lfbe_spectrogram(c.clip);
    for (const auto& e : c.events) ex.events.push_back({0, e.annotation.onset, e.annotation.offset});
    out.push_back(std::move(ex));
  }
  return out;
}

bool same_values(const Parameters& a, const Parameters& b, std::string_view prefix) {
  for (const auto& name : a.names(prefix)) {
    const auto x = a.at(name).data(), y = b.at(name).data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("stage defaults") {
  const TrainConfig p = TrainConfig::pretrain_defaults();
  CHECK(p.learning_rate == 0.001);
  CHECK(p.batch_size == 80);
  CHECK(p.patience == 10);
  const TrainConfig d = TrainConfig::detect_defaults();
  CHECK(d.learning_rate == 0.00001);
  CHECK(d.batch_size == 1);
  CHECK(d.patience == 10);
  CHECK(d.pretrain_mode == PretrainMode::none);
  CHECK_THROWS_AS(parse_pretrain_mode("frozen"), std::invalid_argument);
}

TEST_CASE("split is a seeded partition") {
  const Split s = split_dataset(50, 0.1, 7);
  CHECK(s.val.size() == 5);
  CHECK(s.train.size() == 45);
  std::vector<int> seen(50, 0);
  for (auto i : s.train) ++seen[i];
  for (auto i : s.val) ++seen[i];
  for (int v : seen) CHECK(v == 1);
  const Split again = split_dataset(50, 0.1, 7);
  CHECK(again.val == s.val);
  CHECK(again.train == s.train);
  // Too small to hold anything out: validate on the training clips.
  const Split small = split_dataset(5, 0.1, 7);
  CHECK(small.train.size() == 5);
  CHECK(small.val.size() == 5);
}

TEST_CASE("pretraining reduces the loss and stops on patience") {
  const auto data = tiny_data(12, 0.5, 1);
  TrainConfig tc = TrainConfig::pretrain_defaults();
  tc.batch_size = 4;
  tc.learning_rate = 0.01;
  tc.patience = 2;
  tc.max_epochs = 40;
  tc.val_fraction = 0.25;
  int calls = 0;
  const TrainResult r = pretrain(data, tc, tiny_model(), [&](const EpochLog&) { ++calls; });
  REQUIRE(!r.log.empty());
  CHECK(calls == static_cast<int>(r.log.size()));
  for (const auto& l : r.log) {
    CHECK(std::isfinite(l.train_loss));
    CHECK(std::isfinite(l.val_loss));
  }
  double best = INFINITY;
  for (const auto& l : r.log) best = std::min(best, l.val_loss);
  CHECK(r.best_val_loss == best);
  CHECK(r.log[static_cast<std::size_t>(r.best_epoch - 1)].val_loss == best);
  // Either the cap was hit or exactly `patience` epochs followed the best one.
  if (static_cast<int>(r.log.size()) < tc.max_epochs) {
    CHECK(static_cast<int>(r.log.size()) == r.best_epoch + tc.patience);
  }
  CHECK(r.log.back().epoch == static_cast<int>(r.log.size()));
}

TEST_CASE("fixed mode freezes the backbone; finetune moves it after one step") {
  const auto data = tiny_data(3, 1.0, 2);
  const ModelConfig mc = tiny_model();
  const Parameters init = init_parameters(mc, 99);

  for (PretrainMode mode : {PretrainMode::fixed, PretrainMode::finetune}) {
    TrainConfig tc = TrainConfig::detect_defaults();
    tc.pretrain_mode = mode;
    tc.learning_rate = 0.01;
    Parameters params = init_parameters(mc, 0);
    params.copy_from(init, "backbone.");
    params.copy_from(init, "pretrain.");
    const Parameters before = params.clone();
    AdamState state;
    detector_step(data, {0}, params, state, tc, mc, 5);
    CHECK(same_values(params, before, "pretrain."));
    CHECK_FALSE(same_values(params, before, "rpn."));
    if (mode == PretrainMode::fixed) {
      CHECK(same_values(params, before, "backbone."));
    } else {
      CHECK_FALSE(same_values(params, before, "backbone."));
    }
  }
}

TEST_CASE("fixed mode keeps the backbone bit-identical through training") {
  const auto data = tiny_data(4, 1.0, 3);
  const ModelConfig mc = tiny_model(RnnType::gru);
  const Parameters init = init_parameters(mc, 42);
  TrainConfig tc = TrainConfig::detect_defaults();
  tc.pretrain_mode = PretrainMode::fixed;
  tc.learning_rate = 0.01;
  tc.max_epochs = 2;
  const TrainResult r = train_detector(data, &init, tc, mc);
  CHECK(same_values(r.weights, init, "backbone."));
  CHECK(same_values(r.weights, init, "pretrain."));
}

TEST_CASE("pre-training modes other than none need weights") {
  const auto data = tiny_data(2, 1.0, 4);
  TrainConfig tc = TrainConfig::detect_defaults();
  tc.pretrain_mode = PretrainMode::finetune;
  CHECK_THROWS_WITH_AS(train_detector(data, nullptr, tc, tiny_model()),
                       doctest::Contains("finetune"), std::invalid_argument);
}

TEST_CASE("every recurrent variant runs the detector stage") {
  const auto data = tiny_data(3, 1.0, 5);
  for (RnnType rnn : {RnnType::none, RnnType::gru, RnnType::bigru}) {
    TrainConfig tc = TrainConfig::detect_defaults();
    tc.learning_rate = 0.005;
    tc.max_epochs = 2;
    const ModelConfig mc = tiny_model(rnn);
    const TrainResult r = train_detector(data, nullptr, tc, mc);
    CHECK(r.log.size() == 2);
    const auto d = detect(data[0].spec, data[0].duration_s, mc, r.weights, true);
    CHECK(d.size() <= 1);
  }
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto data = tiny_data(4, 1.0, 6);
  TrainConfig tc = TrainConfig::detect_defaults();
  tc.learning_rate = 0.01;
  tc.max_epochs = 2;
  tc.seed = 12;
  const ModelConfig mc = tiny_model();
  const TrainResult a = train_detector(data, nullptr, tc, mc);
  const TrainResult b = train_detector(data, nullptr, tc, mc);
  CHECK(same_values(a.weights, b.weights, ""));
  CHECK(a.log.back().val_loss == b.log.back().val_loss);
}
