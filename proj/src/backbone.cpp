// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcrnn {

std::string to_string(RnnType t) {
  switch (t) {
    case RnnType::none: return "none";
    case RnnType::gru: return "gru";
    case RnnType::bigru: return "bigru";
  }
  return "?";
}

RnnType parse_rnn_type(const std::string& s) {
  if (s == "none") return RnnType::none;
  if (s == "gru") return RnnType::gru;
  if (s == "bigru") return RnnType::bigru;
  throw std::invalid_argument("unknown rnn type '" + s + "' (expected none, gru or bigru)");
}

std::size_t ModelConfig::feature_height() const {
  switch (rnn_type) {
    case RnnType::none: return static_cast<std::size_t>(projection_width);
    case RnnType::gru: return static_cast<std::size_t>(units);
    case RnnType::bigru: return 2 * static_cast<std::size_t>(units);
  }
  return 0;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("model config: " + why); };
  if (units <= 0 || dense_width <= 0 || projection_width <= 0 || rpn_width <= 0) {
    fail("units, dense_width, projection_width and rpn_width must be positive");
  }
  for (int c : channels) {
    if (c <= 0) fail("channel widths must be positive");
  }
  if (anchor_sizes.empty()) fail("anchor_sizes must not be empty");
  for (double s : anchor_sizes) {
    if (!(s > 0.0)) fail("anchor sizes must be positive");
  }
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (num_classes <= 0) fail("num_classes must be positive");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(num_classes)) {
    fail("class_names has " + std::to_string(class_names.size()) + " entries but num_classes is " +
         std::to_string(num_classes));
  }
  if (roi_bins == 0) fail("roi_bins must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(rpn_neg_iou <= rpn_pos_iou) || !(cls_neg_iou <= cls_pos_iou)) {
    fail("negative IoU thresholds must not exceed positive ones");
  }
  if (top_n <= 0) fail("top_n must be positive");
  if (restricted_grid) {
    if (units != 50 && units != 100) fail("units must be 50 or 100 in restricted grid mode");
    if (dense_width != 64 && dense_width != 128 && dense_width != 256 && dense_width != 512) {
      fail("dense_width must be one of 64, 128, 256, 512 in restricted grid mode");
    }
  }
}

std::size_t feature_frames(std::size_t t) {
  for (int i = 0; i < 3; ++i) t = (t + 1) / 2;
  return t;
}

namespace {

constexpr std::size_t kReducedBands = (((kNumBands + 1) / 2 + 1) / 2 + 1) / 2;

void add_conv(Parameters& p, const std::string& name, std::size_t cin, std::size_t cout,
              std::mt19937_64& rng) {
  p.add_glorot(name + ".w", {3, 3, cin, cout}, 9 * cin, 9 * cout, rng);
  p.add_zeros(name + ".b", {cout});
}

void add_dense(Parameters& p, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng) {
  p.add_glorot(name + ".w", {in, out}, in, out, rng);
  p.add_zeros(name + ".b", {out});
}

void add_gru(Parameters& p, const std::string& name, std::size_t in, std::size_t units,
             std::mt19937_64& rng) {
  p.add_glorot(name + ".wx", {in, 3 * units}, in, 3 * units, rng);
  p.add_uniform(name + ".wh", {units, 3 * units}, 1.0 / std::sqrt(static_cast<double>(units)),
                rng);
  p.add_zeros(name + ".b", {3 * units});
}

Tensor conv(ad::Tape& tape, const Tensor& x, const Parameters& p, const std::string& name,
            std::size_t stride) {
  return ad::conv2d(tape, x, p.at(name + ".w"), p.at(name + ".b"), {stride, stride});
}

Tensor residual_stage(ad::Tape& tape, const Tensor& x, const Parameters& p,
                      const std::string& name) {
  Tensor y = ad::relu(tape, conv(tape, x, p, name + ".entry", 2));
  Tensor r = ad::relu(tape, conv(tape, y, p, name + ".conv1", 1));
  r = conv(tape, r, p, name + ".conv2", 1);
  return ad::relu(tape, ad::add(tape, y, r));
}

Tensor run_gru(ad::Tape& tape, const Tensor& seq, const Parameters& p, const std::string& name,
               std::size_t units, bool reverse) {
  const std::size_t T = seq.dim(0);
  const Tensor& wx = p.at(name + ".wx");
  const Tensor& wh = p.at(name + ".wh");
  const Tensor& b = p.at(name + ".b");
  Tensor h(Shape{1, units});
  std::vector<Tensor> outputs(T);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    Tensor x = ad::slice(tape, seq, 0, t, t + 1);
    h = ad::gru_cell(tape, x, h, wx, wh, b);
    outputs[t] = h;
  }
  return ad::concat(tape, outputs, 0);
}

}  // namespace

void add_backbone_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto c0 = static_cast<std::size_t>(cfg.channels[0]);
  const auto c1 = static_cast<std::size_t>(cfg.channels[1]);
  const auto c2 = static_cast<std::size_t>(cfg.channels[2]);
  add_conv(params, "backbone.stem", 1, c0, rng);
  add_conv(params, "backbone.block_a.entry", c0, c1, rng);
  add_conv(params, "backbone.block_a.conv1", c1, c1, rng);
  add_conv(params, "backbone.block_a.conv2", c1, c1, rng);
  add_conv(params, "backbone.block_b.entry", c1, c2, rng);
  add_conv(params, "backbone.block_b.conv1", c2, c2, rng);
  add_conv(params, "backbone.block_b.conv2", c2, c2, rng);
  const auto proj = static_cast<std::size_t>(cfg.projection_width);
  add_dense(params, "backbone.proj", kReducedBands * c2, proj, rng);
  const auto U = static_cast<std::size_t>(cfg.units);
  if (cfg.rnn_type == RnnType::gru || cfg.rnn_type == RnnType::bigru) {
    add_gru(params, "backbone.gru_fw", proj, U, rng);
  }
  if (cfg.rnn_type == RnnType::bigru) add_gru(params, "backbone.gru_bw", proj, U, rng);
}

void add_pretrain_head_params(Parameters& params, const ModelConfig& cfg,
                              std::mt19937_64& rng) {
  add_dense(params, "pretrain.out", cfg.feature_height(), 1, rng);
}

Tensor normalized_input(const Spectrogram& spec) {
  const std::size_t T = spec.frames;
  if (T == 0 || spec.values.size() != T * kNumBands) {
    throw std::invalid_argument("spectrogram must have " + std::to_string(kNumBands) +
                                " bands and at least one frame");
  }
  Tensor x(Shape{T, kNumBands, 1});
  auto xd = x.data();
  for (std::size_t b = 0; b < kNumBands; ++b) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += spec.values[t * kNumBands + b];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double d = spec.values[t * kNumBands + b] - mean;
      var += d * d;
    }
    const double sd = std::max(std::sqrt(var / static_cast<double>(T)), 1e-5);
    for (std::size_t t = 0; t < T; ++t) {
      xd[t * kNumBands + b] = (spec.values[t * kNumBands + b] - mean) / sd;
    }
  }
  return x;
}

Tensor dense(ad::Tape& tape, const Tensor& x, const Parameters& params,
             const std::string& prefix) {
  return ad::add(tape, ad::matmul(tape, x, params.at(prefix + ".w")), params.at(prefix + ".b"));
}

FeatureMap extract_features(ad::Tape& tape, const Spectrogram& spec, const ModelConfig& cfg,
                            const Parameters& params) {
  if (spec.values.size() != spec.frames * kNumBands) {
    throw std::invalid_argument("extract_features: spectrogram must have " +
                                std::to_string(kNumBands) + " bands");
  }
  Tensor x = normalized_input(spec);
  x = ad::relu(tape, conv(tape, x, params, "backbone.stem", 2));
  x = residual_stage(tape, x, params, "backbone.block_a");
  x = residual_stage(tape, x, params, "backbone.block_b");

  const std::size_t frames = x.dim(0);
  Tensor flat = ad::reshape(tape, x, {frames, x.dim(1) * x.dim(2)});
  Tensor proj = ad::relu(tape, dense(tape, flat, params, "backbone.proj"));

  const auto U = static_cast<std::size_t>(cfg.units);
  Tensor values;
  switch (cfg.rnn_type) {
    case RnnType::none:
      values = proj;
      break;
    case RnnType::gru:
      values = run_gru(tape, proj, params, "backbone.gru_fw", U, false);
      break;
    case RnnType::bigru: {
      const std::array<Tensor, 2> dirs{run_gru(tape, proj, params, "backbone.gru_fw", U, false),
                                       run_gru(tape, proj, params, "backbone.gru_bw", U, true)};
      values = ad::concat(tape, dirs, 1);
      break;
    }
  }
  return {values, 8.0 * spec.frame_shift_s};
}

Tensor pretrain_forward(ad::Tape& tape, const Spectrogram& spec, const ModelConfig& cfg,
                        const Parameters& params) {
  FeatureMap map = extract_features(tape, spec, cfg, params);
  Tensor pooled = ad::max_over_time(tape, map.values);
  pooled = ad::reshape(tape, pooled, {1, pooled.size()});
  return ad::sigmoid(tape, dense(tape, pooled, params, "pretrain.out"));
}

}  // namespace rcrnn
