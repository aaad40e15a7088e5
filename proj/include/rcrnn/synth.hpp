// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale mixture synthesizer: tone bursts (or chirps) dropped into seeded
// noise at a drawn event-to-background ratio, with ground truth.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rcrnn/features.hpp"
#include "rcrnn/manifest.hpp"

namespace rcrnn {

struct SynthSpec {
  double clip_len_s = 30.0;
  int sample_rate_hz = kDefaultSampleRate;
  std::vector<double> ebr_db{-6.0, 0.0, 6.0};
  double occurrence_prob = 0.99;
  std::string event_generator = "tone";      // tone | chirp | mixed
  std::string background_generator = "white";  // white | pink
  std::uint64_t seed = 0;
  int max_events = 1;
  double background_rms = 0.05;
  double min_event_s = 0.5;
  double max_event_s = 2.0;

  /// Clip-level pre-training set: events in half the clips.
  static SynthSpec pretrain_preset();
  /// Detector training set: events in nearly every clip.
  static SynthSpec detection_preset();

  void validate() const;
};

struct SynthEvent {
  EventAnnotation annotation;
  std::size_t begin = 0;  // sample span [begin, end)
  std::size_t end = 0;
  double target_ebr_db = 0.0;
};

struct LabeledClip {
  AudioClip clip;                  // background + events
  std::vector<double> background;  // same length as clip.samples
  std::vector<SynthEvent> events;

  std::vector<EventAnnotation> annotations() const;
};

/// Per-clip RNG stream derived from (seed, index), so clips can be generated
/// in any order.
std::mt19937_64 clip_rng(std::uint64_t seed, std::uint64_t index);

LabeledClip synthesize_clip(const SynthSpec& spec, std::mt19937_64& rng);

/// 10 log10(rms(mix - background)^2 / rms(background)^2) over the event span.
double realized_ebr_db(const LabeledClip& clip, std::size_t event);

/// Writes out_dir/clips/clip_NNNNN.wav and out_dir/manifest.jsonl.
std::vector<ManifestRecord> synthesize_dataset(const SynthSpec& spec, std::size_t n_clips,
                                               const std::filesystem::path& out_dir);

}  // namespace rcrnn
