// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/config.hpp"

#include <fstream>
#include <stdexcept>

namespace rcrnn {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return {{"units", c.units},
          {"dense_width", c.dense_width},
          {"rnn_type", to_string(c.rnn_type)},
          {"anchor_sizes", c.anchor_sizes},
          {"lambda", c.lambda},
          {"channels", c.channels},
          {"projection_width", c.projection_width},
          {"rpn_width", c.rpn_width},
          {"num_classes", c.num_classes},
          {"class_names", c.class_names},
          {"roi_bins", c.roi_bins},
          {"dropout", c.dropout},
          {"rpn_pos_iou", c.rpn_pos_iou},
          {"rpn_neg_iou", c.rpn_neg_iou},
          {"rpn_pos_samples", c.rpn_pos_samples},
          {"rpn_neg_samples", c.rpn_neg_samples},
          {"cls_pos_iou", c.cls_pos_iou},
          {"cls_neg_iou", c.cls_neg_iou},
          {"proposal_nms", c.proposal_nms},
          {"top_n", c.top_n},
          {"detection_nms", c.detection_nms},
          {"detection_threshold", c.detection_threshold},
          {"restricted_grid", c.restricted_grid}};
}

json to_json(const TrainConfig& c) {
  return {{"stage", to_string(c.stage)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"pretrain_mode", to_string(c.pretrain_mode)},
          {"seed", c.seed},
          {"max_epochs", c.max_epochs},
          {"val_fraction", c.val_fraction}};
}

json to_json(const SynthSpec& s) {
  return {{"clip_len_s", s.clip_len_s},
          {"sample_rate_hz", s.sample_rate_hz},
          {"ebr_db", s.ebr_db},
          {"occurrence_prob", s.occurrence_prob},
          {"event_generator", s.event_generator},
          {"background_generator", s.background_generator},
          {"seed", s.seed},
          {"max_events", s.max_events},
          {"background_rms", s.background_rms},
          {"min_event_s", s.min_event_s},
          {"max_event_s", s.max_event_s}};
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read(j, "units", c.units);
  read(j, "dense_width", c.dense_width);
  std::string rnn;
  read(j, "rnn_type", rnn);
  c.rnn_type = parse_rnn_type(rnn);
  read(j, "anchor_sizes", c.anchor_sizes);
  read(j, "lambda", c.lambda);
  read(j, "channels", c.channels);
  read(j, "projection_width", c.projection_width);
  read(j, "rpn_width", c.rpn_width);
  read(j, "num_classes", c.num_classes);
  read(j, "class_names", c.class_names);
  read(j, "roi_bins", c.roi_bins);
  read(j, "dropout", c.dropout);
  read(j, "rpn_pos_iou", c.rpn_pos_iou);
  read(j, "rpn_neg_iou", c.rpn_neg_iou);
  read(j, "rpn_pos_samples", c.rpn_pos_samples);
  read(j, "rpn_neg_samples", c.rpn_neg_samples);
  read(j, "cls_pos_iou", c.cls_pos_iou);
  read(j, "cls_neg_iou", c.cls_neg_iou);
  read(j, "proposal_nms", c.proposal_nms);
  read(j, "top_n", c.top_n);
  read(j, "detection_nms", c.detection_nms);
  read(j, "detection_threshold", c.detection_threshold);
  read(j, "restricted_grid", c.restricted_grid);
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  std::string stage, mode;
  read(j, "stage", stage);
  c.stage = parse_stage(stage);
  read(j, "learning_rate", c.learning_rate);
  read(j, "batch_size", c.batch_size);
  read(j, "patience", c.patience);
  read(j, "pretrain_mode", mode);
  c.pretrain_mode = parse_pretrain_mode(mode);
  read(j, "seed", c.seed);
  read(j, "max_epochs", c.max_epochs);
  read(j, "val_fraction", c.val_fraction);
  c.validate();
  return c;
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  read(j, "clip_len_s", s.clip_len_s);
  read(j, "sample_rate_hz", s.sample_rate_hz);
  read(j, "ebr_db", s.ebr_db);
  read(j, "occurrence_prob", s.occurrence_prob);
  read(j, "event_generator", s.event_generator);
  read(j, "background_generator", s.background_generator);
  read(j, "seed", s.seed);
  read(j, "max_events", s.max_events);
  read(j, "background_rms", s.background_rms);
  read(j, "min_event_s", s.min_event_s);
  read(j, "max_event_s", s.max_event_s);
  s.validate();
  return s;
}

RunConfig::RunConfig() {
  values_ = {{"model", rcrnn::to_json(ModelConfig{})},
             {"pretrain", rcrnn::to_json(TrainConfig::pretrain_defaults())},
             {"train", rcrnn::to_json(TrainConfig::detect_defaults())},
             {"synth", rcrnn::to_json(SynthSpec::detection_preset())},
             {"run",
              {{"single_event", false},
               {"clips", 100},
               {"out", ""},
               {"manifest", ""},
               {"init", ""},
               {"weights", ""},
               {"references", ""},
               {"detections", ""}}}};
  // Walk the defaults once to seed provenance for every leaf.
  for (const auto& [section, fields] : values_.items()) {
    for (const auto& [key, v] : fields.items()) provenance_[section + "." + key] = "default";
  }
}

void RunConfig::apply_at(const json& overlay, json& target, const std::string& prefix,
                         const std::string& source) {
  if (!overlay.is_object()) {
    throw std::invalid_argument("config: expected an object at '" + prefix + "'");
  }
  for (const auto& [key, v] : overlay.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!target.contains(key)) throw std::invalid_argument("config: unknown field '" + dotted + "'");
    if (prefix.empty()) {
      apply_at(v, target[key], dotted, source);
    } else {
      target[key] = v;
      provenance_[dotted] = source;
    }
  }
}

void RunConfig::apply(const json& overlay, const std::string& source) {
  json next = values_;
  auto prov = provenance_;
  // Validate before committing so a bad overlay leaves the config untouched.
  try {
    apply_at(overlay, next, "", source);
    (void)model_config_from_json(next["model"]);
    (void)train_config_from_json(next["pretrain"]);
    (void)train_config_from_json(next["train"]);
    (void)synth_spec_from_json(next["synth"]);
  } catch (...) {
    provenance_ = std::move(prov);
    throw;
  }
  values_ = std::move(next);
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  // Accept either a plain overlay or a resolved config written by a run.
  if (j.contains("values") && j.contains("provenance")) j = j["values"];
  try {
    apply(j, "file");
  } catch (const std::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void RunConfig::set(const std::string& dotted_key, const json& value, const std::string& source) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw std::invalid_argument("config: bad key '" + dotted_key + "'");
  apply({{dotted_key.substr(0, dot), {{dotted_key.substr(dot + 1), value}}}}, source);
}

const std::string& RunConfig::provenance(const std::string& dotted_key) const {
  const auto it = provenance_.find(dotted_key);
  if (it == provenance_.end()) throw std::invalid_argument("config: unknown field '" + dotted_key + "'");
  return it->second;
}

ModelConfig RunConfig::model() const { return model_config_from_json(values_.at("model")); }
TrainConfig RunConfig::pretrain() const { return train_config_from_json(values_.at("pretrain")); }
TrainConfig RunConfig::train() const { return train_config_from_json(values_.at("train")); }
SynthSpec RunConfig::synth() const { return synth_spec_from_json(values_.at("synth")); }

json RunConfig::to_json() const {
  return {{"values", values_}, {"provenance", provenance_}};
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

RunConfig RunConfig::read_resolved(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  const json j = json::parse(in);
  RunConfig rc;
  rc.apply(j.at("values"), "file");
  for (const auto& [k, v] : j.at("provenance").items()) rc.provenance_[k] = v.get<std::string>();
  return rc;
}

}  // namespace rcrnn
