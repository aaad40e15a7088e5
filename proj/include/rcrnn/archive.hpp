// SPDX-License-Identifier: Apache-2.0
//
// Weight archive layout:
//   8 bytes   magic "RCRNNWA1"
//   8 bytes   header length n, little-endian u64
//   n bytes   JSON header: format_version, model_config, tensors
//             [{name, shape, offset, count}], payload_sha256
//   rest      float64 little-endian payload, tensors in name order
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "rcrnn/backbone.hpp"
#include "rcrnn/params.hpp"

namespace rcrnn {

inline constexpr int kArchiveFormatVersion = 1;

struct WeightArchive {
  int format_version = kArchiveFormatVersion;
  ModelConfig config;
  Parameters params;
  std::string payload_sha256;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string file_sha256(const std::filesystem::path& path);

/// Returns the payload checksum.
std::string save_archive(const std::filesystem::path& path, const ModelConfig& cfg,
                         const Parameters& params);

/// Verifies magic, version, payload checksum, and that every tensor matches
/// the shapes a model built from the stored config would have.
WeightArchive load_archive(const std::filesystem::path& path);

}  // namespace rcrnn
