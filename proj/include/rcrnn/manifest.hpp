// SPDX-License-Identifier: Apache-2.0
//
// JSONL manifest shared by datasets, detections and evaluation:
//   {"audio": "clips/clip_00000.wav",
//    "events": [{"class": "tone", "onset": 1.25, "offset": 2.0}]}
// Detection records add a "probability" per event.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rcrnn {

struct EventAnnotation {
  std::string label;
  double onset = 0.0;
  double offset = 0.0;
  std::optional<double> probability;
};

struct ManifestRecord {
  std::string audio;
  std::vector<EventAnnotation> events;
};

std::string to_json_line(const ManifestRecord& record);
ManifestRecord parse_json_line(const std::string& line);

/// Throws std::runtime_error naming the file (and line) on failure.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace rcrnn
