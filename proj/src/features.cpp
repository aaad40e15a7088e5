// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rcrnn {

void validate_clip(const AudioClip& clip) {
  if (clip.sample_rate_hz <= 0) {
    throw std::invalid_argument("audio clip sample rate must be positive, got " +
                                std::to_string(clip.sample_rate_hz));
  }
  if (clip.samples.size() < kWindowSamples) {
    throw std::invalid_argument("audio clip has " + std::to_string(clip.samples.size()) +
                                " samples; at least one " +
                                std::to_string(kWindowSamples) +
                                "-sample window is required");
  }
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("audio clip holds a non-finite sample");
  }
}

std::size_t frame_count(std::size_t num_samples, std::size_t window, std::size_t hop) {
  if (num_samples < window) return 0;
  // A trailing partial hop gets its own zero-padded frame.
  return (num_samples - window + hop - 1) / hop + 1;
}

namespace {

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<std::vector<double>> frame_signal(const AudioClip& clip, std::size_t window,
                                              std::size_t hop) {
  if (window == 0 || hop == 0) throw std::invalid_argument("window and hop must be positive");
  if (clip.samples.size() < window) {
    throw std::invalid_argument("audio clip has " + std::to_string(clip.samples.size()) +
                                " samples, shorter than one " + std::to_string(window) +
                                "-sample window");
  }
  const std::size_t n = frame_count(clip.samples.size(), window, hop);
  const auto w = hann(window);
  std::vector<std::vector<double>> frames(n, std::vector<double>(window));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = i * hop;
    const std::size_t avail = std::min(window, clip.samples.size() - begin);
    for (std::size_t j = 0; j < avail; ++j) frames[i][j] = clip.samples[begin + j] * w[j];
  }
  return frames;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t num_filters, std::size_t fft_size,
                             int sample_rate_hz, double low_hz, double high_hz)
    : num_bins_(fft_size / 2 + 1) {
  if (num_filters == 0 || fft_size < 2 || sample_rate_hz <= 0) {
    throw std::invalid_argument("mel filterbank needs filters > 0, fft_size >= 2, rate > 0");
  }
  const double nyquist = sample_rate_hz / 2.0;
  if (high_hz < 0.0) high_hz = nyquist;
  if (!(low_hz >= 0.0 && high_hz > low_hz && high_hz <= nyquist)) {
    throw std::invalid_argument("mel filterbank range must satisfy 0 <= low < high <= Nyquist");
  }
  const double mel_lo = hz_to_mel(low_hz), mel_hi = hz_to_mel(high_hz);
  edges_hz_.resize(num_filters + 2);
  for (std::size_t i = 0; i < edges_hz_.size(); ++i) {
    edges_hz_[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(num_filters + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(fft_size);
  weights_.assign(num_filters, std::vector<double>(num_bins_, 0.0));
  for (std::size_t m = 0; m < num_filters; ++m) {
    const double left = edges_hz_[m], center = edges_hz_[m + 1], right = edges_hz_[m + 2];
    for (std::size_t k = 0; k < num_bins_; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      weights_[m][k] = w;
    }
    double sum = 0.0;
    for (double w : weights_[m]) sum += w;
    if (!(sum > 0.0)) {
      throw std::invalid_argument("mel filter " + std::to_string(m) +
                                  " covers no FFT bin; too many filters for fft_size " +
                                  std::to_string(fft_size));
    }
  }
}

void MelFilterbank::apply(const std::vector<double>& power, std::vector<double>& out) const {
  out.assign(weights_.size(), 0.0);
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    const auto& w = weights_[m];
    double s = 0.0;
    for (std::size_t k = 0; k < num_bins_; ++k) s += w[k] * power[k];
    out[m] = s;
  }
}

Spectrogram lfbe_spectrogram(const AudioClip& clip) {
  validate_clip(clip);
  const auto frames = frame_signal(clip);
  const MelFilterbank bank(kNumBands, kWindowSamples, clip.sample_rate_hz);

  double* in = fftw_alloc_real(kWindowSamples);
  fftw_complex* spec = fftw_alloc_complex(kWindowSamples / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kWindowSamples), in, spec, FFTW_ESTIMATE);
  }

  Spectrogram out;
  out.frames = frames.size();
  out.values.resize(out.frames * kNumBands);
  out.frame_shift_s = static_cast<double>(kHopSamples) / clip.sample_rate_hz;
  out.frame_length_s = static_cast<double>(kWindowSamples) / clip.sample_rate_hz;

  std::vector<double> power(kWindowSamples / 2 + 1), energies;
  const double log_floor = std::log(kEnergyFloor);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::copy(frames[i].begin(), frames[i].end(), in);
    fftw_execute(plan);
    for (std::size_t k = 0; k < power.size(); ++k) {
      power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    }
    bank.apply(power, energies);
    for (std::size_t m = 0; m < kNumBands; ++m) {
      out.values[i * kNumBands + m] =
          energies[m] > kEnergyFloor ? std::log(energies[m]) : log_floor;
    }
  }

  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(in);
  return out;
}

double frame_to_seconds(std::size_t frame, int sample_rate_hz, std::size_t hop) {
  return static_cast<double>(frame * hop) / sample_rate_hz;
}

std::size_t seconds_to_frame(double seconds, int sample_rate_hz, std::size_t hop) {
  if (seconds <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(seconds * sample_rate_hz /
                                             static_cast<double>(hop)));
}

}  // namespace rcrnn
