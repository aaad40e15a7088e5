// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rcrnn/archive.hpp"
#include "rcrnn/config.hpp"
#include "rcrnn/detector.hpp"

using namespace rcrnn;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("rcrnn_test_config_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ModelConfig small_model() {
  ModelConfig c;
  c.units = 3;
  c.dense_width = 5;
  c.channels = {2, 2, 2};
  c.projection_width = 4;
  c.rpn_width = 3;
  return c;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("defaults, file and flags merge with provenance") {
  const auto dir = scratch("merge");
  write_text(dir / "c.json", R"({"model": {"units": 50, "dense_width": 64}, "train": {"patience": 3}})");
  RunConfig rc;
  CHECK(rc.model().units == 100);
  CHECK(rc.provenance("model.units") == "default");
  rc.apply_file(dir / "c.json");
  rc.set("model.units", 16, "flag");
  CHECK(rc.model().units == 16);
  CHECK(rc.model().dense_width == 64);
  CHECK(rc.train().patience == 3);
  CHECK(rc.provenance("model.units") == "flag");
  CHECK(rc.provenance("model.dense_width") == "file");
  CHECK(rc.provenance("train.learning_rate") == "default");
  CHECK(rc.pretrain().learning_rate == 0.001);
  CHECK(rc.pretrain().batch_size == 80);
  CHECK(rc.train().learning_rate == 0.00001);
}

TEST_CASE("unknown keys are rejected and leave the config untouched") {
  RunConfig rc;
  CHECK_THROWS_WITH_AS(rc.apply(json{{"model", {{"units", 7}, {"widht", 3}}}}, "file"),
                       doctest::Contains("model.widht"), std::invalid_argument);
  CHECK(rc.model().units == 100);
  CHECK(rc.provenance("model.units") == "default");
  CHECK_THROWS_AS(rc.set("nope.key", 1, "flag"), std::invalid_argument);
}

TEST_CASE("a written config reads back with the same values and provenance") {
  const auto dir = scratch("resolved");
  RunConfig rc;
  rc.set("synth.clip_len_s", 10.0, "flag");
  rc.set("run.clips", 7, "flag");
  rc.write(dir / "config.json");
  const RunConfig back = RunConfig::read_resolved(dir / "config.json");
  CHECK(back.values() == rc.values());
  CHECK(back.provenance("synth.clip_len_s") == "flag");
  CHECK(back.provenance("model.units") == "default");
  CHECK(back.synth().clip_len_s == 10.0);
  // A resolved file also works as an overlay.
  RunConfig again;
  again.apply_file(dir / "config.json");
  CHECK(again.values() == rc.values());
}

TEST_CASE("json views round-trip each settings struct") {
  ModelConfig m = small_model();
  m.rnn_type = RnnType::gru;
  m.anchor_sizes = {1, 3};
  const ModelConfig m2 = model_config_from_json(to_json(m));
  CHECK(to_json(m2) == to_json(m));
  TrainConfig t = TrainConfig::detect_defaults();
  t.pretrain_mode = PretrainMode::fixed;
  CHECK(to_json(train_config_from_json(to_json(t))) == to_json(t));
  SynthSpec s;
  s.background_generator = "pink";
  CHECK(to_json(synth_spec_from_json(to_json(s))) == to_json(s));
  json broken = to_json(m);
  broken.erase("units");
  CHECK_THROWS(model_config_from_json(broken));
}

TEST_CASE("weight archives round-trip bit-identically") {
  const auto dir = scratch("archive");
  const ModelConfig cfg = small_model();
  const Parameters p = init_parameters(cfg, 3);
  const std::string sum = save_archive(dir / "w.rcw", cfg, p);
  const WeightArchive a = load_archive(dir / "w.rcw");
  CHECK(a.payload_sha256 == sum);
  CHECK(a.format_version == kArchiveFormatVersion);
  CHECK(to_json(a.config) == to_json(cfg));
  CHECK(a.params.names() == p.names());
  for (const auto& name : p.names()) {
    const auto x = p.at(name).data(), y = a.params.at(name).data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  // Same weights, same bytes.
  save_archive(dir / "w2.rcw", cfg, p);
  CHECK(file_sha256(dir / "w.rcw") == file_sha256(dir / "w2.rcw"));
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("corrupted or mismatched archives are refused") {
  const auto dir = scratch("corrupt");
  const ModelConfig cfg = small_model();
  const Parameters p = init_parameters(cfg, 4);
  save_archive(dir / "w.rcw", cfg, p);
  {
    std::fstream f(dir / "w.rcw", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x55');
  }
  CHECK_THROWS_WITH_AS(load_archive(dir / "w.rcw"), doctest::Contains("checksum"), std::runtime_error);

  write_text(dir / "junk.rcw", "not an archive");
  CHECK_THROWS_AS(load_archive(dir / "junk.rcw"), std::runtime_error);
  CHECK_THROWS_AS(load_archive(dir / "missing.rcw"), std::runtime_error);

  // Weights from a different shape than the stored config describes.
  ModelConfig other = cfg;
  other.units = 4;
  save_archive(dir / "bad.rcw", cfg, init_parameters(other, 0));
  CHECK_THROWS_AS(load_archive(dir / "bad.rcw"), std::runtime_error);
}

TEST_CASE("manifest errors name the file and line") {
  const auto dir = scratch("manifest");
  write_text(dir / "m.jsonl",
             "{\"audio\": \"a.wav\", \"events\": []}\n{\"audio\": \"b.wav\", \"events\": [{\"class\": \"x\"}]}\n");
  CHECK_THROWS_WITH_AS(read_manifest(dir / "m.jsonl"), doctest::Contains("m.jsonl:2"), std::runtime_error);
  write_text(dir / "bad.jsonl", "{\"audio\": \"a.wav\", \"events\": [{\"class\": \"x\", \"onset\": 2, \"offset\": 1}]}\n");
  CHECK_THROWS_WITH_AS(read_manifest(dir / "bad.jsonl"), doctest::Contains("bad.jsonl:1"), std::runtime_error);

  const std::vector<ManifestRecord> recs{{"a.wav", {{"tone", 1.0, 2.5, 0.9}}}, {"b.wav", {}}};
  write_manifest(dir / "ok.jsonl", recs);
  const auto back = read_manifest(dir / "ok.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].events[0].probability == 0.9);
  CHECK(back[0].events[0].offset == 2.5);
  CHECK(back[1].events.empty());
}
