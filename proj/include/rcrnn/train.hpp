// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: clip-level pre-training of the backbone, then the
// detector (RPN + classifier) with ADAM and early stopping on a held-out split.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rcrnn/detector.hpp"
#include "rcrnn/manifest.hpp"
#include "rcrnn/optim.hpp"

namespace rcrnn {

enum class Stage { pretrain, detect };
enum class PretrainMode { none, fixed, finetune };

std::string to_string(Stage s);
std::string to_string(PretrainMode m);
Stage parse_stage(const std::string& s);
PretrainMode parse_pretrain_mode(const std::string& s);

struct TrainConfig {
  Stage stage = Stage::detect;
  double learning_rate = 0.00001;
  int batch_size = 1;
  int patience = 10;
  PretrainMode pretrain_mode = PretrainMode::none;
  std::uint64_t seed = 0;
  int max_epochs = 100;       // hard cap on top of early stopping
  double val_fraction = 0.1;

  static TrainConfig pretrain_defaults();
  static TrainConfig detect_defaults();
  void validate() const;
};

struct Example {
  std::string audio;
  Spectrogram spec;
  double duration_s = 0.0;
  std::vector<EventLabel> events;
};

/// Reads a manifest and computes LFBE features for every clip. Audio paths
/// are resolved against the manifest's directory. Labels are mapped through
/// `class_names`; an unknown label is an error.
std::vector<Example> load_dataset(const std::filesystem::path& manifest,
                                  const std::vector<std::string>& class_names);

/// Sorted distinct event labels in a manifest.
std::vector<std::string> manifest_classes(const std::vector<ManifestRecord>& records);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;

  std::string to_json_line() const;
};

struct TrainResult {
  Parameters weights;  // best-validation snapshot
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Seeded split: floor(val_fraction * n) clips for validation. When that
/// rounds to zero the training clips double as the validation set.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_dataset(std::size_t n, double val_fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes clip-level BCE of the pre-training head. Only backbone.* and
/// pretrain.* are updated; the returned set carries every parameter.
TrainResult pretrain(const std::vector<Example>& data, const TrainConfig& tc,
                     const ModelConfig& mc, const EpochCallback& on_epoch = {});

/// Detector training. `init` must hold pre-trained backbone weights unless
/// pretrain_mode is none.
TrainResult train_detector(const std::vector<Example>& data, const Parameters* init,
                           const TrainConfig& tc, const ModelConfig& mc,
                           const EpochCallback& on_epoch = {});

/// Whether the detector stage updates a parameter under the given mode.
bool detector_trainable(const std::string& name, PretrainMode mode);

/// One ADAM step over the given clips; returns the mean loss. Exposed so the
/// frozen / finetune semantics can be checked on a single step.
double detector_step(const std::vector<Example>& data, const std::vector<std::size_t>& batch,
                     Parameters& params, AdamState& state, const TrainConfig& tc,
                     const ModelConfig& mc, std::uint64_t step_seed);

}  // namespace rcrnn
