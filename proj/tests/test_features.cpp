// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "rcrnn/features.hpp"

using namespace rcrnn;

namespace {

AudioClip noise_clip(std::size_t n, std::uint64_t seed, double amp = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, amp);
  AudioClip c;
  c.samples.resize(n);
  for (double& v : c.samples) v = g(rng);
  return c;
}

// Independent count: slide a window start by hop while any sample of the
// window is still inside the clip's last hop-aligned span.
std::size_t count_frames_by_sliding(std::size_t n, std::size_t window, std::size_t hop) {
  if (n < window) return 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start == 0 || start + window < n + hop; start += hop) ++count;
  return count;
}

}  // namespace

TEST_CASE("frame counts") {
  CHECK(frame_count(2048) == 1);
  CHECK(frame_count(2048 + 1024) == 2);
  CHECK(frame_count(2047) == 0);
  CHECK(frame_count(1323000) == 1291);
  for (std::size_t n : {2048u, 2049u, 3071u, 3072u, 3073u, 44100u, 441000u, 1323000u}) {
    CHECK(frame_count(n) == count_frames_by_sliding(n, 2048, 1024));
  }
}

TEST_CASE("frame_signal applies a periodic Hann window and zero-pads the tail") {
  AudioClip c;
  c.samples.assign(2048 + 512, 1.0);
  const auto frames = frame_signal(c);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0][0] == 0.0);
  CHECK(frames[0][1024] == doctest::Approx(1.0));
  CHECK(frames[0][512] == doctest::Approx(0.5));
  // Second frame starts at 1024; samples beyond 2560 are padding.
  CHECK(frames[1][1024] == doctest::Approx(1.0));
  CHECK(frames[1][1536] == 0.0);
}

TEST_CASE("clips shorter than one window are rejected") {
  AudioClip c;
  c.samples.assign(2047, 0.0);
  CHECK_THROWS_AS(frame_signal(c), std::invalid_argument);
  CHECK_THROWS_AS(lfbe_spectrogram(c), std::invalid_argument);
}

TEST_CASE("silence maps to the log energy floor") {
  AudioClip c;
  c.samples.assign(44100, 0.0);
  const Spectrogram s = lfbe_spectrogram(c);
  CHECK(s.frames == frame_count(44100));
  CHECK(s.values.size() == s.frames * kNumBands);
  for (double v : s.values) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("doubling the signal adds log 4 to every band") {
  const AudioClip a = noise_clip(20000, 3);
  AudioClip b = a;
  for (double& v : b.samples) v *= 2.0;
  const Spectrogram sa = lfbe_spectrogram(a), sb = lfbe_spectrogram(b);
  for (std::size_t i = 0; i < sa.values.size(); ++i) {
    CHECK(sb.values[i] - sa.values[i] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    CHECK(sb.values[i] >= sa.values[i]);
  }
}

TEST_CASE("30 s at 44.1 kHz gives a 1291 x 64 spectrogram with 23 ms shift") {
  const Spectrogram s = lfbe_spectrogram(noise_clip(1323000, 5));
  CHECK(s.frames == 1291);
  CHECK(s.values.size() == 1291 * 64);
  CHECK(s.frame_shift_s == doctest::Approx(1024.0 / 44100.0));
  CHECK(s.frame_length_s == doctest::Approx(2048.0 / 44100.0));
}

TEST_CASE("HTK mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  for (double hz : {10.0, 440.0, 8000.0, 22050.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("mel filter bank partitions 0..Nyquist with half-overlapping triangles") {
  const MelFilterbank fb(64, 2048, 44100);
  REQUIRE(fb.num_filters() == 64);
  CHECK(fb.num_bins() == 1025);
  const auto& e = fb.edges_hz();
  REQUIRE(e.size() == 66);
  CHECK(e.front() == 0.0);
  CHECK(e.back() == doctest::Approx(22050.0));
  const double step = hz_to_mel(e[1]) - hz_to_mel(e[0]);
  for (std::size_t i = 1; i < e.size(); ++i) {
    CHECK(hz_to_mel(e[i]) - hz_to_mel(e[i - 1]) == doctest::Approx(step));
  }
  for (std::size_t m = 0; m < 64; ++m) {
    const auto& w = fb.weights(m);
    double sum = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double hz = 22050.0 * static_cast<double>(k) / 1024.0;
      CHECK(w[k] >= 0.0);
      CHECK(w[k] <= 1.0 + 1e-12);
      // Support is confined to [edge m, edge m+2].
      if (hz < e[m] - 1e-9 || hz > e[m + 2] + 1e-9) CHECK(w[k] == 0.0);
      sum += w[k];
    }
    CHECK(sum > 0.0);
    CHECK(std::isfinite(sum));
  }
}

TEST_CASE("a pure tone peaks in the band around its frequency") {
  AudioClip c;
  c.samples.resize(8192);
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(i) / 44100.0);
  }
  const Spectrogram s = lfbe_spectrogram(c);
  const MelFilterbank fb(64, 2048, 44100);
  std::size_t best = 0;
  for (std::size_t m = 1; m < 64; ++m) {
    if (s.at(1, m) > s.at(1, best)) best = m;
  }
  CHECK(fb.edges_hz()[best] < 1000.0);
  CHECK(fb.edges_hz()[best + 2] > 1000.0);
}

TEST_CASE("seconds and frames round-trip within one hop") {
  for (double t : {0.0, 0.01, 1.5, 7.3, 29.9}) {
    const std::size_t f = seconds_to_frame(t, 44100);
    const double back = frame_to_seconds(f, 44100);
    CHECK(back <= t + 1e-12);
    CHECK(t - back < 1024.0 / 44100.0);
  }
}

TEST_CASE("wav round trip keeps 16-bit quantized samples") {
  const auto dir = std::filesystem::temp_directory_path() / "rcrnn_test_wav";
  std::filesystem::create_directories(dir);
  AudioClip c = noise_clip(5000, 9, 0.3);
  c.samples[0] = 1.0;  // clamps to 32767
  c.samples[1] = -1.0;
  c.sample_rate_hz = 16000;
  write_wav(dir / "a.wav", c);
  const AudioClip back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate_hz == 16000);
  const auto q = quantize_pcm16(c.samples);
  REQUIRE(back.samples.size() == q.size());
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(back.samples[i] == q[i]);
  CHECK(back.samples[0] == 32767.0 / 32768.0);
  CHECK(back.samples[1] == -1.0);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), std::runtime_error);
}
