// SPDX-License-Identifier: Apache-2.0
//
// CRNN feature extractor: a 3x3 stride-2 stem, two residual blocks entered by
// a 3x3 stride-2 convolution, a dense projection of the flattened frequency
// axis, then an optional (bi)directional GRU. Time is downsampled 8x with
// same-padding, so 1291 input frames become 162 feature-map frames.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rcrnn/autodiff.hpp"
#include "rcrnn/features.hpp"
#include "rcrnn/params.hpp"

namespace rcrnn {

enum class RnnType { none, gru, bigru };

std::string to_string(RnnType t);
RnnType parse_rnn_type(const std::string& s);

struct ModelConfig {
  int units = 100;         // recurrent units per direction (U)
  int dense_width = 512;   // classifier dense width (M)
  RnnType rnn_type = RnnType::bigru;
  std::vector<double> anchor_sizes{1, 2, 4, 8, 16, 32};
  double lambda = 1.0;
  std::array<int, 3> channels{16, 32, 64};
  int projection_width = 128;
  int rpn_width = 128;
  int num_classes = 1;
  std::vector<std::string> class_names;  // optional; size == num_classes when set

  std::size_t roi_bins = 7;
  double dropout = 0.5;

  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  int rpn_pos_samples = 32;
  int rpn_neg_samples = 32;
  double cls_pos_iou = 0.5;
  double cls_neg_iou = 0.5;
  double proposal_nms = 0.7;
  int top_n = 100;
  double detection_nms = 0.3;
  double detection_threshold = 0.8;

  /// Restrict U to {50, 100} and M to {64, 128, 256, 512}.
  bool restricted_grid = false;

  std::size_t anchors_per_frame() const { return anchor_sizes.size(); }
  /// Height H of the feature map: 2U, U, or the projection width.
  std::size_t feature_height() const;
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct FeatureMap {
  Tensor values;              // (T', H)
  double frame_shift_s = 0.0; // 8x the spectrogram frame shift

  std::size_t frames() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
};

/// ceil(ceil(ceil(T/2)/2)/2)
std::size_t feature_frames(std::size_t spectrogram_frames);

void add_backbone_params(Parameters& params, const ModelConfig& cfg, std::mt19937_64& rng);
void add_pretrain_head_params(Parameters& params, const ModelConfig& cfg,
                              std::mt19937_64& rng);

/// Per-band standardization over the clip, shaped (T, 64, 1).
Tensor normalized_input(const Spectrogram& spec);

FeatureMap extract_features(ad::Tape& tape, const Spectrogram& spec, const ModelConfig& cfg,
                            const Parameters& params);

/// Clip-level event probability, shape (1, 1): global max over time of the
/// feature map, then one dense unit and a sigmoid.
Tensor pretrain_forward(ad::Tape& tape, const Spectrogram& spec, const ModelConfig& cfg,
                        const Parameters& params);

/// Dense layer x (n, in) . W (in, out) + b (out).
Tensor dense(ad::Tape& tape, const Tensor& x, const Parameters& params,
             const std::string& prefix);

}  // namespace rcrnn
