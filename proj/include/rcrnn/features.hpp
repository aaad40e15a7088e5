// SPDX-License-Identifier: Apache-2.0
//
// Log filter-bank energies: Hann-windowed 2048-point frames every 1024
// samples, power spectrum, 64 triangular HTK-mel filters over [0, Nyquist],
// natural log with a 1e-10 energy floor.
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace rcrnn {

inline constexpr std::size_t kWindowSamples = 2048;
inline constexpr std::size_t kHopSamples = 1024;
inline constexpr std::size_t kNumBands = 64;
inline constexpr double kEnergyFloor = 1e-10;
inline constexpr int kDefaultSampleRate = 44100;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kDefaultSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Throws std::invalid_argument when the clip is shorter than one window,
/// has a non-positive rate, or holds non-finite samples.
void validate_clip(const AudioClip& clip);

struct Spectrogram {
  std::size_t frames = 0;
  std::vector<double> values;  // frames x kNumBands, row-major
  double frame_shift_s = 0.0;
  double frame_length_s = 0.0;

  double at(std::size_t frame, std::size_t band) const {
    return values[frame * kNumBands + band];
  }
};

/// ceil((n - window) / hop) + 1 for n >= window, else 0. A final partial hop
/// is zero-padded, so 30 s at 44.1 kHz gives 1291 frames.
std::size_t frame_count(std::size_t num_samples, std::size_t window = kWindowSamples,
                        std::size_t hop = kHopSamples);

/// Hann-windowed frames, frame i covering samples [i*hop, i*hop + window);
/// samples past the end of the clip read as zero.
std::vector<std::vector<double>> frame_signal(const AudioClip& clip,
                                              std::size_t window = kWindowSamples,
                                              std::size_t hop = kHopSamples);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular mel filters over FFT bins 0..fft_size/2.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t num_filters, std::size_t fft_size, int sample_rate_hz,
                double low_hz = 0.0, double high_hz = -1.0);

  std::size_t num_filters() const { return weights_.size(); }
  std::size_t num_bins() const { return num_bins_; }
  /// Edge frequencies: filter m rises from edges[m] to edges[m+1] and falls to edges[m+2].
  const std::vector<double>& edges_hz() const { return edges_hz_; }
  const std::vector<double>& weights(std::size_t filter) const { return weights_[filter]; }

  void apply(const std::vector<double>& power, std::vector<double>& out) const;

 private:
  std::size_t num_bins_;
  std::vector<double> edges_hz_;
  std::vector<std::vector<double>> weights_;  // dense per filter, num_bins_ each
};

Spectrogram lfbe_spectrogram(const AudioClip& clip);

/// Start time of spectrogram frame i.
double frame_to_seconds(std::size_t frame, int sample_rate_hz,
                        std::size_t hop = kHopSamples);
/// Index of the frame whose hop-sized slot contains time t.
std::size_t seconds_to_frame(double seconds, int sample_rate_hz,
                             std::size_t hop = kHopSamples);

AudioClip read_wav(const std::filesystem::path& path);
/// 16-bit PCM mono; samples are clamped to [-1, 1) before quantization.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Rounds samples the way write_wav does, so in-memory pipelines can match
/// what a WAV round trip would produce.
std::vector<double> quantize_pcm16(const std::vector<double>& samples);

}  // namespace rcrnn
