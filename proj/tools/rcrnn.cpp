// SPDX-License-Identifier: Apache-2.0
//
// rcrnn: synthesize data, train, detect, evaluate, self-verify.
// Exit codes: 0 ok, 1 usage, 2 runtime failure, 3 selfcheck failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcrnn/archive.hpp"
#include "rcrnn/config.hpp"
#include "rcrnn/metrics.hpp"
#include "rcrnn/synth.hpp"
#include "rcrnn/train.hpp"
#include "rcrnn/verify/suites.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rcrnn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSelfcheck = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Collects "only if given" flags and pushes them into the run config.
class FlagSet {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key,
                   const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *holder, help);
    entries_.push_back({opt, key, [holder]() { return json(*holder); }});
    return opt;
  }
  CLI::Option* add_switch(CLI::App* app, const std::string& flag, const std::string& key,
                          const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    entries_.push_back({opt, key, []() { return json(true); }});
    return opt;
  }
  void apply(RunConfig& rc) const {
    for (const auto& e : entries_) {
      if (e.opt->count() == 0) continue;
      try {
        rc.set(e.key, e.value(), "flag");
      } catch (const std::exception& ex) {
        throw UsageError(e.opt->get_name() + ": " + ex.what());
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::function<json()> value;
  };
  std::vector<Entry> entries_;
};

struct Globals {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool force = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

RunConfig resolve(const Globals& g, const FlagSet& flags) {
  RunConfig rc;
  if (!g.config.empty()) {
    try {
      rc.apply_file(g.config);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (g.seed_opt->count()) {
    for (const char* k : {"synth.seed", "pretrain.seed", "train.seed"}) rc.set(k, g.seed, "flag");
  }
  if (g.out_opt->count()) rc.set("run.out", g.out, "flag");
  flags.apply(rc);
  return rc;
}

fs::path require_path(const RunConfig& rc, const std::string& key, const std::string& flag) {
  const auto v = rc.values().at("run").at(key).get<std::string>();
  if (v.empty()) throw UsageError("missing " + flag);
  return v;
}

// Creates the run directory; refuses to clobber `guarded` without --force.
fs::path prepare_out(const RunConfig& rc, bool force, const std::vector<std::string>& guarded) {
  const fs::path out = require_path(rc, "out", "--out DIR");
  for (const auto& name : guarded) {
    if (fs::exists(out / name) && !force) {
      throw UsageError((out / name).string() + " exists; pass --force to overwrite");
    }
  }
  fs::create_directories(out);
  rc.write(out / "config.json");
  return out;
}

void write_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : log) out << e.to_json_line() << '\n';
}

EpochCallback progress(const std::string& stage) {
  return [stage](const EpochLog& e) {
    std::cerr << stage << " epoch " << e.epoch << ": train " << e.train_loss << ", val "
              << e.val_loss << " (" << e.seconds << " s)\n";
  };
}

int cmd_synth(const RunConfig& rc, bool force) {
  const fs::path out = prepare_out(rc, force, {"manifest.jsonl"});
  const SynthSpec spec = rc.synth();
  const auto clips = rc.values().at("run").at("clips").get<std::int64_t>();
  if (clips < 0) throw UsageError("--clips must be >= 0");
  const auto records = synthesize_dataset(spec, static_cast<std::size_t>(clips), out);
  std::size_t events = 0;
  for (const auto& r : records) events += r.events.size();
  std::cout << "wrote " << records.size() << " clips (" << events << " events) to " << out.string()
            << '\n';
  return 0;
}

ModelConfig model_for(const RunConfig& rc, const std::vector<ManifestRecord>& records) {
  ModelConfig mc = rc.model();
  if (mc.class_names.empty()) {
    mc.class_names = manifest_classes(records);
    if (mc.class_names.empty()) mc.class_names = {"event"};
    mc.num_classes = static_cast<int>(mc.class_names.size());
  }
  mc.validate();
  return mc;
}

int cmd_pretrain(const RunConfig& rc, bool force) {
  const fs::path manifest = require_path(rc, "manifest", "--manifest PATH");
  const fs::path out = prepare_out(rc, force, {"weights.rcw"});
  const auto records = read_manifest(manifest);
  const ModelConfig mc = model_for(rc, records);
  const auto data = load_dataset(manifest, mc.class_names);
  TrainResult r = pretrain(data, rc.pretrain(), mc, progress("pretrain"));
  write_log(out / "train_log.jsonl", r.log);
  const std::string sum = save_archive(out / "weights.rcw", mc, r.weights);
  std::cout << "best epoch " << r.best_epoch << " (val loss " << r.best_val_loss << "); weights "
            << (out / "weights.rcw").string() << " sha256 " << sum << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc, bool force) {
  const fs::path manifest = require_path(rc, "manifest", "--manifest PATH");
  const TrainConfig tc = rc.train();
  std::optional<WeightArchive> init;
  const auto init_path = rc.values().at("run").at("init").get<std::string>();
  if (tc.pretrain_mode != PretrainMode::none) {
    if (init_path.empty()) {
      throw UsageError("--pretrain-mode " + to_string(tc.pretrain_mode) +
                       " needs pre-trained weights (--init ARCHIVE)");
    }
    init = load_archive(init_path);
  }
  const fs::path out = prepare_out(rc, force, {"weights.rcw"});
  const auto records = read_manifest(manifest);
  const ModelConfig mc = model_for(rc, records);
  const auto data = load_dataset(manifest, mc.class_names);
  TrainResult r = train_detector(data, init ? &init->params : nullptr, tc, mc, progress("train"));
  write_log(out / "train_log.jsonl", r.log);
  const std::string sum = save_archive(out / "weights.rcw", mc, r.weights);
  std::cout << "best epoch " << r.best_epoch << " (val loss " << r.best_val_loss << "); weights "
            << (out / "weights.rcw").string() << " sha256 " << sum << '\n';
  return 0;
}

int cmd_detect(const RunConfig& rc, bool force, const std::vector<std::string>& audio) {
  const fs::path weights = require_path(rc, "weights", "--weights ARCHIVE");
  WeightArchive a = load_archive(weights);
  // Inference-time settings come from the run config when given as flags or file.
  for (const char* key : {"detection_threshold", "detection_nms", "top_n", "proposal_nms"}) {
    if (rc.provenance(std::string("model.") + key) != "default") {
      json j = to_json(a.config);
      j[key] = rc.values().at("model").at(key);
      a.config = model_config_from_json(j);
    }
  }
  const bool single = rc.values().at("run").at("single_event").get<bool>();

  std::vector<std::pair<std::string, fs::path>> clips;  // (record id, file)
  const auto manifest = rc.values().at("run").at("manifest").get<std::string>();
  if (!manifest.empty()) {
    for (const auto& r : read_manifest(manifest)) {
      clips.emplace_back(r.audio, fs::path(manifest).parent_path() / r.audio);
    }
  }
  for (const auto& p : audio) clips.emplace_back(p, p);
  if (clips.empty()) throw UsageError("detect needs --manifest PATH or audio files");

  const fs::path out = prepare_out(rc, force, {"detections.jsonl"});
  std::vector<ManifestRecord> records;
  const auto names = a.config.class_names;
  for (const auto& [id, file] : clips) {
    const AudioClip clip = read_wav(file);
    const auto dets = detect(lfbe_spectrogram(clip), clip.duration_s(), a.config, a.params, single);
    ManifestRecord rec{id, {}};
    for (const auto& d : dets) {
      const auto cls = static_cast<std::size_t>(d.class_id);
      rec.events.push_back({cls < names.size() ? names[cls] : std::to_string(d.class_id),
                            d.interval.onset(), d.interval.offset(), d.probability});
    }
    records.push_back(std::move(rec));
  }
  write_manifest(out / "detections.jsonl", records);
  std::cout << "wrote " << records.size() << " records to " << (out / "detections.jsonl").string()
            << '\n';
  return 0;
}

int cmd_eval(const RunConfig& rc, bool force, double collar) {
  const fs::path refs = require_path(rc, "references", "--references PATH");
  const fs::path dets = require_path(rc, "detections", "--detections PATH");
  const EvaluationReport report = evaluate(read_manifest(refs), read_manifest(dets), collar);
  const std::string text = report_to_json(report);
  std::cout << text << '\n';
  if (!rc.values().at("run").at("out").get<std::string>().empty()) {
    const fs::path out = prepare_out(rc, force, {"report.json"});
    std::ofstream f(out / "report.json", std::ios::trunc);
    f << text << '\n';
    if (!f) throw std::runtime_error("cannot write " + (out / "report.json").string());
  }
  return 0;
}

void add_model_flags(CLI::App* cmd, FlagSet& f) {
  f.add<std::string>(cmd, "--rnn-type", "model.rnn_type", "none | gru | bigru");
  f.add<int>(cmd, "--units", "model.units", "recurrent units per direction");
  f.add<int>(cmd, "--dense-width", "model.dense_width", "classifier dense width");
  f.add<std::vector<int>>(cmd, "--channels", "model.channels", "three conv widths")->expected(3);
  f.add<int>(cmd, "--projection-width", "model.projection_width", "dense projection width");
  f.add<int>(cmd, "--rpn-width", "model.rpn_width", "RPN window width");
  f.add<std::vector<double>>(cmd, "--anchor-sizes", "model.anchor_sizes", "anchor lengths (frames)");
}

void add_train_flags(CLI::App* cmd, FlagSet& f, const std::string& section) {
  f.add<double>(cmd, "--lr", section + ".learning_rate", "ADAM learning rate");
  f.add<int>(cmd, "--batch", section + ".batch_size", "clips per update");
  f.add<int>(cmd, "--patience", section + ".patience", "early-stopping patience (epochs)");
  f.add<int>(cmd, "--max-epochs", section + ".max_epochs", "epoch cap");
  f.add<double>(cmd, "--val-fraction", section + ".val_fraction", "held-out share");
  f.add<std::string>(cmd, "--manifest", "run.manifest", "dataset manifest (JSONL)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-based CRNN audio event detector"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config overlay or a resolved run config");
  g.seed_opt = app.add_option("--seed", g.seed, "seed for synthesis and training");
  g.out_opt = app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "overwrite existing outputs");

  FlagSet synth_f, pre_f, train_f, det_f, eval_f;
  auto* synth = app.add_subcommand("synth", "synthesize a labeled dataset");
  synth_f.add<std::int64_t>(synth, "--clips", "run.clips", "number of clips");
  synth_f.add<double>(synth, "--occurrence", "synth.occurrence_prob", "event probability per slot");
  synth_f.add<double>(synth, "--clip-len", "synth.clip_len_s", "clip length (s)");
  synth_f.add<int>(synth, "--sample-rate", "synth.sample_rate_hz", "sample rate (Hz)");
  synth_f.add<std::vector<double>>(synth, "--ebr", "synth.ebr_db", "event-to-background ratios (dB)");
  synth_f.add<std::string>(synth, "--generator", "synth.event_generator", "tone | chirp | mixed");
  synth_f.add<std::string>(synth, "--background", "synth.background_generator", "white | pink");
  synth_f.add<int>(synth, "--max-events", "synth.max_events", "event slots per clip");

  auto* pre = app.add_subcommand("pretrain", "clip-level pre-training of the backbone");
  add_model_flags(pre, pre_f);
  add_train_flags(pre, pre_f, "pretrain");

  auto* train = app.add_subcommand("train", "train the detector");
  add_model_flags(train, train_f);
  add_train_flags(train, train_f, "train");
  train_f.add<std::string>(train, "--pretrain-mode", "train.pretrain_mode", "none | fixed | finetune");
  train_f.add<std::string>(train, "--init", "run.init", "pre-trained weight archive");

  auto* det = app.add_subcommand("detect", "detect events in audio");
  std::vector<std::string> audio;
  det->add_option("audio", audio, "WAV files");
  det_f.add<std::string>(det, "--weights", "run.weights", "weight archive");
  det_f.add<std::string>(det, "--manifest", "run.manifest", "clips to process (JSONL)");
  det_f.add_switch(det, "--single-event", "run.single_event", "at most one detection per clip");
  det_f.add<double>(det, "--threshold", "model.detection_threshold", "probability threshold");

  auto* ev = app.add_subcommand("eval", "score detections against references");
  double collar = kDefaultCollarS;
  eval_f.add<std::string>(ev, "--references", "run.references", "reference manifest");
  eval_f.add<std::string>(ev, "--detections", "run.detections", "detection manifest");
  ev->add_option("--collar", collar, "onset collar (s)")->check(CLI::PositiveNumber);

  auto* self = app.add_subcommand("selfcheck", "run the built-in verification suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (self->parsed()) return verify::run_selfcheck(std::cout) ? 0 : kExitSelfcheck;
    if (synth->parsed()) return cmd_synth(resolve(g, synth_f), g.force);
    if (pre->parsed()) return cmd_pretrain(resolve(g, pre_f), g.force);
    if (train->parsed()) return cmd_train(resolve(g, train_f), g.force);
    if (det->parsed()) return cmd_detect(resolve(g, det_f), g.force, audio);
    if (ev->parsed()) return cmd_eval(resolve(g, eval_f), g.force, collar);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
