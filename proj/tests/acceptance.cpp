// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: acceptance WORK_DIR
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "rcrnn/archive.hpp"
#include "rcrnn/metrics.hpp"
#include "rcrnn/synth.hpp"
#include "rcrnn/train.hpp"
#include "rcrnn/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace rcrnn;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradSuiteBudgetS = 120.0;
constexpr double kNmsBudgetS = 10.0;
constexpr double kRoundtripTol = 1e-9;
constexpr double kEbrTolDb = 0.1;
constexpr double kToyMinF1 = 0.8;
constexpr double kToyMaxEr = 0.4;
constexpr double kToyBudgetS = 30.0 * 60.0;
constexpr double kCollarS = 0.5;
constexpr std::uint64_t kToySeed = 2024;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  "
            << what << " | " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// Toy benchmark settings: U = 16, M = 32 with a narrow convolutional stack.
struct ToySetup {
  RnnType rnn = RnnType::bigru;
  std::size_t train_clips = 200;
  std::size_t pretrain_clips = 200;
  std::size_t test_clips = 50;
  int pretrain_epochs = 30;
  int detector_epochs = 40;
  int patience = 10;
};

ModelConfig toy_model(RnnType rnn) {
  ModelConfig m;
  m.units = 16;
  m.dense_width = 32;
  m.rnn_type = rnn;
  m.channels = {8, 16, 16};
  m.projection_width = 32;
  m.rpn_width = 32;
  m.class_names = {"tone"};
  m.num_classes = 1;
  return m;
}

SynthSpec toy_synth(double occurrence, std::uint64_t seed) {
  SynthSpec s;
  s.clip_len_s = 10.0;
  s.occurrence_prob = occurrence;
  s.event_generator = "tone";
  s.seed = seed;
  return s;
}

struct ToyOutcome {
  double f1 = 0.0;
  std::optional<double> er;
  double seconds = 0.0;
  std::string archive_sha256;
  MatchCounts counts;
};

ToyOutcome run_toy(const fs::path& dir, const ToySetup& setup, std::uint64_t seed) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  synthesize_dataset(toy_synth(0.99, seed), setup.train_clips, dir / "train");
  synthesize_dataset(toy_synth(0.5, seed + 1), setup.pretrain_clips, dir / "pre");
  synthesize_dataset(toy_synth(0.5, seed + 2), setup.test_clips, dir / "test");

  const ModelConfig mc = toy_model(setup.rnn);
  const auto pre_data = load_dataset(dir / "pre" / "manifest.jsonl", mc.class_names);
  TrainConfig pc = TrainConfig::pretrain_defaults();
  pc.batch_size = 10;
  pc.max_epochs = setup.pretrain_epochs;
  pc.patience = setup.patience;
  pc.seed = seed;
  const TrainResult pre = pretrain(pre_data, pc, mc);

  const auto train_data = load_dataset(dir / "train" / "manifest.jsonl", mc.class_names);
  TrainConfig tc = TrainConfig::detect_defaults();
  tc.learning_rate = 0.001;
  tc.pretrain_mode = PretrainMode::finetune;
  tc.max_epochs = setup.detector_epochs;
  tc.patience = setup.patience;
  tc.seed = seed;
  const TrainResult det = train_detector(train_data, &pre.weights, tc, mc);

  ToyOutcome out;
  save_archive(dir / "weights.rcw", mc, det.weights);
  out.archive_sha256 = file_sha256(dir / "weights.rcw");

  const auto refs = read_manifest(dir / "test" / "manifest.jsonl");
  const auto test_data = load_dataset(dir / "test" / "manifest.jsonl", mc.class_names);
  std::vector<ManifestRecord> hyps;
  for (const auto& ex : test_data) {
    ManifestRecord r{ex.audio, {}};
    for (const auto& d : detect(ex.spec, ex.duration_s, mc, det.weights, true)) {
      r.events.push_back({mc.class_names.at(static_cast<std::size_t>(d.class_id)),
                          d.interval.onset(), d.interval.offset(), d.probability});
    }
    hyps.push_back(std::move(r));
  }
  write_manifest(dir / "detections.jsonl", hyps);
  const EvaluationReport rep = evaluate(refs, hyps, kCollarS);
  const auto it = rep.per_class.find("tone");
  if (it != rep.per_class.end()) {
    out.f1 = it->second.f1;
    out.er = it->second.error_rate;
    out.counts = it->second.counts;
  }
  out.seconds = seconds_since(t0);
  return out;
}

void criterion_1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string failed;
  std::size_t n = 0;
  for (const auto& r : verify::gradient_suite(verify::kGradTolerance)) {
    ++n;
    worst = std::max(worst, r.value);
    if (!r.passed) failed += " " + r.name;
  }
  const double s = seconds_since(t0);
  report(1, failed.empty() && s < kGradSuiteBudgetS, "gradient suite",
         std::to_string(n) + " checks, max rel err " + fmt(worst) + ", " + fmt(s, 3) + " s" +
             (failed.empty() ? "" : ", failed:" + failed));
}

void criterion_2() {
  const auto t0 = Clock::now();
  const auto r = verify::nms_oracle_suite(1000, 1);
  const double s = seconds_since(t0);
  report(2, r.passed && s < kNmsBudgetS, "NMS vs brute force", r.detail + ", " + fmt(s, 3) + " s");
}

void criterion_3() {
  const auto r = verify::roundtrip_suite(100000, 2, kRoundtripTol);
  report(3, r.passed, "encode/decode roundtrip", r.detail);
}

void criterion_4() {
  bool ok = true;
  std::string detail;
  // 30 s clip at 44.1 kHz through features and the toy bigru backbone.
  SynthSpec s = toy_synth(1.0, 7);
  s.clip_len_s = 30.0;
  auto rng = clip_rng(7, 0);
  const LabeledClip clip = synthesize_clip(s, rng);
  const Spectrogram spec = lfbe_spectrogram(clip.clip);
  ok &= spec.frames == 1291 && spec.values.size() == 1291 * kNumBands;
  detail += "spectrogram " + std::to_string(spec.frames) + "x" +
            std::to_string(spec.values.size() / spec.frames);

  const ModelConfig mc = toy_model(RnnType::bigru);
  const Parameters params = init_parameters(mc, 1);
  ad::Tape tape;
  tape.set_enabled(false);
  const FeatureMap map = extract_features(tape, spec, mc, params);
  ok &= map.frames() == 162 && map.height() == 2 * static_cast<std::size_t>(mc.units);
  detail += ", feature map " + std::to_string(map.frames()) + "x" + std::to_string(map.height());

  // RoI pooling rows over random intervals touching the map.
  std::mt19937_64 r(11);
  std::uniform_real_distribution<double> on(-20.0, 170.0), len(0.05, 200.0);
  std::size_t pooled = 0, bad = 0;
  std::vector<Interval> rois;
  while (rois.size() < 2000) {
    const double a = on(r);
    const Interval iv(a, a + len(r));
    if (iv.offset() > 0.0 && iv.onset() < 162.0) rois.push_back(iv);
  }
  const Tensor out = roi_pool(tape, map.values, rois, mc.roi_bins);
  pooled = out.dim(0);
  if (out.dim(1) != 7 || out.dim(2) != map.height()) bad = pooled;
  ok &= bad == 0 && pooled == rois.size();
  detail += ", RoI pool " + std::to_string(pooled) + " x " + std::to_string(out.dim(1)) + " rows";

  const auto anchors = make_anchors(map.frames(), ModelConfig{}.anchor_sizes);
  ok &= anchors.size() == 972;
  detail += ", anchors " + std::to_string(anchors.size());
  report(4, ok, "shape contract", detail);
}

void criterion_5() {
  bool ok = true;
  std::string detail;
  for (int M : {64, 128, 256, 512}) {
    ModelConfig c = toy_model(RnnType::bigru);
    c.dense_width = M;
    c.class_names.clear();
    c.num_classes = 1;
    ModelConfig d = c;
    d.num_classes = 2;
    const auto diff = init_parameters(d, 0).count() - init_parameters(c, 0).count();
    ok &= diff == static_cast<std::size_t>(3 * M + 3);
    detail += (detail.empty() ? "" : ", ") + std::string("M=") + std::to_string(M) + ": +" +
              std::to_string(diff);
  }
  report(5, ok, "3M+3 per extra class", detail);
}

void criterion_6() {
  bool ok = true;
  std::size_t n = 0;
  for (const auto& r : verify::metric_hand_cases()) {
    ok &= r.passed;
    ++n;
  }
  const auto oracle = verify::matching_oracle_suite(5000, 3);
  ok &= oracle.passed;
  report(6, ok, "metric hand cases + exhaustive matching",
         std::to_string(n) + " hand cases, " + oracle.detail);
}

void criterion_7() {
  bool ok = true;
  std::string detail;
  for (double target : {-6.0, 0.0, 6.0}) {
    SynthSpec s = toy_synth(1.0, 70);
    s.ebr_db = {target};
    double worst = 0.0;
    std::size_t events = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      auto rng = clip_rng(70 + static_cast<std::uint64_t>(target + 10.0), i);
      const LabeledClip c = synthesize_clip(s, rng);
      for (const auto& e : c.events) {
        double fg = 0.0, bg = 0.0;
        for (std::size_t k = e.begin; k < e.end; ++k) {
          const double ev = c.clip.samples[k] - c.background[k];
          fg += ev * ev;
          bg += c.background[k] * c.background[k];
        }
        const double realized = 20.0 * std::log10(std::sqrt(fg / bg));
        worst = std::max(worst, std::abs(realized - target));
        ++events;
      }
    }
    ok &= worst <= kEbrTolDb && events == 100;
    detail += (detail.empty() ? "" : ", ") + fmt(target, 2) + " dB: " + std::to_string(events) +
              " events, max dev " + fmt(worst, 3);
  }
  report(7, ok, "EBR fidelity", detail);
}

std::string outcome_detail(const ToyOutcome& o) {
  return "F1 " + fmt(o.f1) + ", ER " + (o.er ? fmt(*o.er) : std::string("undefined")) + " (TP " +
         std::to_string(o.counts.tp) + ", D " + std::to_string(o.counts.deletions) + ", I " +
         std::to_string(o.counts.insertions) + ", N " + std::to_string(o.counts.references) +
         "), " + fmt(o.seconds, 4) + " s";
}

ToyOutcome criterion_8(const fs::path& work) {
  ToyOutcome o;
  try {
    o = run_toy(work / "toy", ToySetup{}, kToySeed);
    const bool ok = o.f1 >= kToyMinF1 && o.er && *o.er <= kToyMaxEr && o.seconds < kToyBudgetS;
    report(8, ok, "toy end-to-end", outcome_detail(o));
  } catch (const std::exception& e) {
    report(8, false, "toy end-to-end", std::string("error: ") + e.what());
  }
  return o;
}

void criterion_9(const fs::path& work) {
  bool ok = true;
  std::string detail;
  try {
    // Freeze / finetune mechanics on real toy clips.
    synthesize_dataset(toy_synth(0.99, 90), 6, work / "mech");
    const ModelConfig mc = toy_model(RnnType::bigru);
    const auto data = load_dataset(work / "mech" / "manifest.jsonl", mc.class_names);
    const Parameters init = init_parameters(mc, 91);
    auto backbone_equal = [](const Parameters& a, const Parameters& b) {
      for (const auto& n : a.names("backbone.")) {
        const auto x = a.at(n).data(), y = b.at(n).data();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
      }
      return true;
    };
    TrainConfig tc = TrainConfig::detect_defaults();
    tc.learning_rate = 0.001;
    tc.max_epochs = 2;
    tc.pretrain_mode = PretrainMode::fixed;
    const TrainResult fixed = train_detector(data, &init, tc, mc);
    const bool frozen = backbone_equal(fixed.weights, init);

    tc.pretrain_mode = PretrainMode::finetune;
    Parameters p = init_parameters(mc, 0);
    p.copy_from(init, "backbone.");
    p.copy_from(init, "pretrain.");
    AdamState state;
    detector_step(data, {0}, p, state, tc, mc, 1);
    const bool moved = !backbone_equal(p, init);
    ok &= frozen && moved;
    detail += std::string("fixed backbone ") + (frozen ? "bit-identical" : "CHANGED") +
              ", finetune " + (moved ? "changed after 1 step" : "UNCHANGED");

    // Shortened toy pipeline per recurrent variant.
    for (RnnType rnn : {RnnType::none, RnnType::gru, RnnType::bigru}) {
      ToySetup s;
      s.rnn = rnn;
      s.train_clips = 20;
      s.pretrain_clips = 20;
      s.test_clips = 10;
      s.pretrain_epochs = 1;
      s.detector_epochs = 1;
      const ToyOutcome o = run_toy(work / ("variant_" + to_string(rnn)), s, 500);
      const bool done = fs::exists(work / ("variant_" + to_string(rnn)) / "detections.jsonl");
      ok &= done;
      detail += ", " + to_string(rnn) + (done ? " completed" : " FAILED") + " (" +
                fmt(o.seconds, 3) + " s)";
    }
  } catch (const std::exception& e) {
    ok = false;
    detail += std::string(" error: ") + e.what();
  }
  report(9, ok, "ablation mechanics", detail);
}

void criterion_10(const fs::path& work, const ToyOutcome& first) {
  try {
    const ToyOutcome again = run_toy(work / "toy_repeat", ToySetup{}, kToySeed);
    const bool ok = !first.archive_sha256.empty() && again.archive_sha256 == first.archive_sha256;
    report(10, ok, "determinism",
           "archive sha256 " + first.archive_sha256.substr(0, 16) + " vs " +
               again.archive_sha256.substr(0, 16));
  } catch (const std::exception& e) {
    report(10, false, "determinism", std::string("error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance WORK_DIR\n";
    return 2;
  }
  const fs::path work = argv[1];
  fs::create_directories(work);

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  const ToyOutcome toy = criterion_8(work);
  criterion_9(work);
  criterion_10(work, toy);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
