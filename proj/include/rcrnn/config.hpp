// SPDX-License-Identifier: Apache-2.0
//
// JSON views of the model, training and synthesis settings, and the merged
// run configuration (defaults <- file <- flags) with per-field provenance.
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "rcrnn/backbone.hpp"
#include "rcrnn/synth.hpp"
#include "rcrnn/train.hpp"

namespace rcrnn {

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SynthSpec& s);

/// Every key must be present; call with a fully merged object.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

class RunConfig {
 public:
  /// Sections: model, pretrain, train, synth, and run (paths and command
  /// switches).
  RunConfig();

  /// Overlays a JSON object; every leaf must name a known field. `source` is
  /// recorded as the provenance of each leaf it sets ("file" or "flag").
  void apply(const nlohmann::json& overlay, const std::string& source);
  void apply_file(const std::filesystem::path& path);
  /// Sets one dotted key, e.g. "model.units".
  void set(const std::string& dotted_key, const nlohmann::json& value, const std::string& source);

  const nlohmann::json& values() const { return values_; }
  const std::string& provenance(const std::string& dotted_key) const;

  ModelConfig model() const;
  TrainConfig pretrain() const;
  TrainConfig train() const;
  SynthSpec synth() const;

  /// {"values": ..., "provenance": {"model.units": "default", ...}}
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
  /// Reads a file produced by write(); provenance is kept as recorded.
  static RunConfig read_resolved(const std::filesystem::path& path);

 private:
  void apply_at(const nlohmann::json& overlay, nlohmann::json& target, const std::string& prefix,
                const std::string& source);

  nlohmann::json values_;
  std::map<std::string, std::string> provenance_;
};

}  // namespace rcrnn
