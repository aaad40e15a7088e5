// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace rcrnn {

std::string to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "detect"; }

std::string to_string(PretrainMode m) {
  switch (m) {
    case PretrainMode::none: return "none";
    case PretrainMode::fixed: return "fixed";
    case PretrainMode::finetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "detect") return Stage::detect;
  throw std::invalid_argument("unknown stage '" + s + "' (expected pretrain or detect)");
}

PretrainMode parse_pretrain_mode(const std::string& s) {
  if (s == "none") return PretrainMode::none;
  if (s == "fixed") return PretrainMode::fixed;
  if (s == "finetune") return PretrainMode::finetune;
  throw std::invalid_argument("unknown pretrain mode '" + s + "' (expected none, fixed or finetune)");
}

TrainConfig TrainConfig::pretrain_defaults() {
  TrainConfig t;
  t.stage = Stage::pretrain;
  t.learning_rate = 0.001;
  t.batch_size = 80;
  return t;
}

TrainConfig TrainConfig::detect_defaults() {
  TrainConfig t;
  t.stage = Stage::detect;
  t.learning_rate = 0.00001;
  t.batch_size = 1;
  return t;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("train config: " + why); };
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (batch_size < 1) fail("batch size must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must be in [0, 1)");
}

std::vector<std::string> manifest_classes(const std::vector<ManifestRecord>& records) {
  std::set<std::string> names;
  for (const auto& r : records) {
    for (const auto& e : r.events) names.insert(e.label);
  }
  return {names.begin(), names.end()};
}

std::vector<Example> load_dataset(const std::filesystem::path& manifest,
                                  const std::vector<std::string>& class_names) {
  const auto records = read_manifest(manifest);
  const auto root = manifest.parent_path();
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Example ex;
    ex.audio = r.audio;
    const AudioClip clip = read_wav(root / r.audio);
    ex.duration_s = clip.duration_s();
    ex.spec = lfbe_spectrogram(clip);
    for (const auto& e : r.events) {
      const auto it = std::find(class_names.begin(), class_names.end(), e.label);
      if (it == class_names.end()) {
        throw std::invalid_argument(manifest.string() + ": clip '" + r.audio +
                                    "' has event class '" + e.label +
                                    "' that the model does not know");
      }
      ex.events.push_back({static_cast<int>(it - class_names.begin()), e.onset, e.offset});
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::string EpochLog::to_json_line() const {
  return nlohmann::json{{"epoch", epoch},
                        {"train_loss", train_loss},
                        {"val_loss", val_loss},
                        {"seconds", seconds}}
      .dump();
}

Split split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eed5a1177ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  if (s.val.empty()) s.val = s.train;
  std::sort(s.val.begin(), s.val.end());
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  std::mt19937_64 rng(seq);
  return rng();
}

double clip_bce(ad::Tape& tape, const Example& ex, const ModelConfig& mc, const Parameters& params,
                Tensor* loss_out) {
  Tensor p = pretrain_forward(tape, ex.spec, mc, params);
  const double y = ex.events.empty() ? 0.0 : 1.0;
  Tensor loss = ad::reduce_sum(tape, binary_cross_entropy(tape, p, std::span<const double>(&y, 1)));
  if (loss_out) *loss_out = loss;
  return loss.item();
}

// Shared epoch loop. `step` runs one optimizer step over a batch and returns
// its mean loss; `val_loss` scores one clip without updating anything.
TrainResult run_epochs(const std::vector<Example>& data, const TrainConfig& tc,
                       Parameters& params, const EpochCallback& on_epoch,
                       const std::function<double(const std::vector<std::size_t>&, std::uint64_t)>& step,
                       const std::function<double(std::size_t)>& val_loss) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  tc.validate();
  const Split split = split_dataset(data.size(), tc.val_fraction, tc.seed);
  std::mt19937_64 order_rng(mix_seed(tc.seed, 1, 0));

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.weights = params.clone();
  std::uint64_t step_no = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<std::size_t> order = split.train;
    std::shuffle(order.begin(), order.end(), order_rng);
    double train_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tc.batch_size)) {
      const auto e = std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                     order.begin() + static_cast<std::ptrdiff_t>(e));
      train_sum += step(batch, mix_seed(tc.seed, 2, step_no++));
      ++batches;
    }
    double val_sum = 0.0;
    for (std::size_t i : split.val) val_sum += val_loss(i);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_sum / static_cast<double>(batches);
    log.val_loss = val_sum / static_cast<double>(split.val.size());
    log.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!std::isfinite(log.val_loss) || !std::isfinite(log.train_loss)) {
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                               " (non-finite loss)");
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      result.weights = params.clone();
    } else if (epoch - result.best_epoch >= tc.patience) {
      break;
    }
  }
  return result;
}

}  // namespace

TrainResult pretrain(const std::vector<Example>& data, const TrainConfig& tc,
                     const ModelConfig& mc, const EpochCallback& on_epoch) {
  if (tc.stage != Stage::pretrain) throw std::invalid_argument("pretrain: stage must be pretrain");
  Parameters params = init_parameters(mc, tc.seed);
  auto trainable = [](const std::string& n) {
    return starts_with(n, "backbone.") || starts_with(n, "pretrain.");
  };
  for (auto& [name, t] : params) t.set_requires_grad(trainable(name));
  AdamState state;
  AdamOptions opt;
  opt.lr = tc.learning_rate;

  auto step = [&](const std::vector<std::size_t>& batch, std::uint64_t) {
    params.zero_grad();
    double sum = 0.0;
    for (std::size_t i : batch) {
      ad::Tape tape;
      Tensor loss;
      sum += clip_bce(tape, data[i], mc, params, &loss);
      tape.backward(ad::scale(tape, loss, 1.0 / static_cast<double>(batch.size())));
    }
    adam_update(params, state, opt, trainable);
    return sum / static_cast<double>(batch.size());
  };
  auto val = [&](std::size_t i) {
    ad::Tape tape;
    tape.set_enabled(false);
    return clip_bce(tape, data[i], mc, params, nullptr);
  };
  TrainResult r = run_epochs(data, tc, params, on_epoch, step, val);
  for (auto& [name, t] : r.weights) t.set_requires_grad(false);
  return r;
}

bool detector_trainable(const std::string& name, PretrainMode mode) {
  if (starts_with(name, "pretrain.")) return false;
  if (starts_with(name, "backbone.")) return mode != PretrainMode::fixed;
  return true;
}

double detector_step(const std::vector<Example>& data, const std::vector<std::size_t>& batch,
                     Parameters& params, AdamState& state, const TrainConfig& tc,
                     const ModelConfig& mc, std::uint64_t step_seed) {
  for (auto& [name, t] : params) t.set_requires_grad(detector_trainable(name, tc.pretrain_mode));
  params.zero_grad();
  double sum = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    ad::Tape tape;
    DetectorLoss l = detector_loss(tape, data[batch[j]].spec, data[batch[j]].events, mc, params,
                                   true, mix_seed(step_seed, j, 3));
    sum += l.total.item();
    tape.backward(ad::scale(tape, l.total, 1.0 / static_cast<double>(batch.size())));
  }
  AdamOptions opt;
  opt.lr = tc.learning_rate;
  adam_update(params, state, opt,
              [&](const std::string& n) { return detector_trainable(n, tc.pretrain_mode); });
  return sum / static_cast<double>(batch.size());
}

TrainResult train_detector(const std::vector<Example>& data, const Parameters* init,
                           const TrainConfig& tc, const ModelConfig& mc,
                           const EpochCallback& on_epoch) {
  if (tc.stage != Stage::detect) throw std::invalid_argument("train_detector: stage must be detect");
  Parameters params = init_parameters(mc, tc.seed);
  if (tc.pretrain_mode != PretrainMode::none) {
    if (!init) {
      throw std::invalid_argument("pretrain mode '" + to_string(tc.pretrain_mode) +
                                  "' needs pre-trained weights");
    }
    params.copy_from(*init, "backbone.");
    params.copy_from(*init, "pretrain.");
  }
  AdamState state;
  auto step = [&](const std::vector<std::size_t>& batch, std::uint64_t seed) {
    return detector_step(data, batch, params, state, tc, mc, seed);
  };
  auto val = [&](std::size_t i) {
    ad::Tape tape;
    tape.set_enabled(false);
    return detector_loss(tape, data[i].spec, data[i].events, mc, params, false,
                         mix_seed(tc.seed, 4, i))
        .total.item();
  };
  TrainResult r = run_epochs(data, tc, params, on_epoch, step, val);
  for (auto& [name, t] : r.weights) t.set_requires_grad(false);
  return r;
}

}  // namespace rcrnn
