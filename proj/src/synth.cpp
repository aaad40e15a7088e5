// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace rcrnn {

SynthSpec SynthSpec::pretrain_preset() {
  SynthSpec s;
  s.occurrence_prob = 0.5;
  return s;
}

SynthSpec SynthSpec::detection_preset() {
  SynthSpec s;
  s.occurrence_prob = 0.99;
  return s;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("synth spec: " + why); };
  if (sample_rate_hz <= 0) fail("sample rate must be positive");
  if (!(min_event_s > 0.0 && min_event_s <= max_event_s)) fail("need 0 < min_event_s <= max_event_s");
  if (!(clip_len_s > max_event_s)) {
    fail("event length up to " + std::to_string(max_event_s) + " s does not fit a " +
         std::to_string(clip_len_s) + " s clip");
  }
  if (!(occurrence_prob >= 0.0 && occurrence_prob <= 1.0)) fail("occurrence_prob must be in [0, 1]");
  if (ebr_db.empty()) fail("ebr_db must list at least one level");
  if (max_events < 1) fail("max_events must be >= 1");
  if (!(background_rms > 0.0)) fail("background_rms must be positive");
  if (event_generator != "tone" && event_generator != "chirp" && event_generator != "mixed") {
    fail("unknown event generator '" + event_generator + "'");
  }
  if (background_generator != "white" && background_generator != "pink") {
    fail("unknown background generator '" + background_generator + "'");
  }
  if (static_cast<std::size_t>(std::llround(clip_len_s * sample_rate_hz)) < kWindowSamples) {
    fail("clip shorter than one analysis window");
  }
}

std::vector<EventAnnotation> LabeledClip::annotations() const {
  std::vector<EventAnnotation> out;
  for (const auto& e : events) out.push_back(e.annotation);
  return out;
}

std::mt19937_64 clip_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

double rms(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

std::vector<double> make_background(const SynthSpec& spec, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = gauss(rng);
  if (spec.background_generator == "pink") {
    // Paul Kellet's refined pink filter.
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (double& v : x) {
      const double w = v;
      b0 = 0.99886 * b0 + w * 0.0555179;
      b1 = 0.99332 * b1 + w * 0.0750759;
      b2 = 0.96900 * b2 + w * 0.1538520;
      b3 = 0.86650 * b3 + w * 0.3104856;
      b4 = 0.55000 * b4 + w * 0.5329522;
      b5 = -0.7616 * b5 - w * 0.0168980;
      v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
      b6 = w * 0.115926;
    }
  }
  const double g = spec.background_rms / rms(x.data(), n);
  for (double& v : x) v *= g;
  return x;
}

std::vector<double> make_event(const std::string& kind, std::size_t n, int rate,
                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(300.0, 3000.0);
  std::uniform_real_distribution<double> phase0(0.0, 2.0 * std::numbers::pi);
  const double f0 = freq(rng);
  const double f1 = kind == "chirp" ? freq(rng) : f0;
  const double phi = phase0(rng);
  const double dur = static_cast<double>(n) / rate;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double ph = 2.0 * std::numbers::pi * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
    x[i] = std::sin(ph + phi);
  }
  // 10 ms raised-cosine ramps.
  const std::size_t ramp = std::min(n / 2, static_cast<std::size_t>(0.01 * rate));
  for (std::size_t i = 0; i < ramp; ++i) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(ramp));
    x[i] *= w;
    x[n - 1 - i] *= w;
  }
  return x;
}

}  // namespace

LabeledClip synthesize_clip(const SynthSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_len_s * spec.sample_rate_hz));
  LabeledClip out;
  out.clip.sample_rate_hz = spec.sample_rate_hz;
  out.background = make_background(spec, n, rng);
  out.clip.samples = out.background;

  std::bernoulli_distribution occurs(spec.occurrence_prob);
  std::uniform_real_distribution<double> length_s(spec.min_event_s, spec.max_event_s);
  std::uniform_int_distribution<std::size_t> pick_ebr(0, spec.ebr_db.size() - 1);
  std::bernoulli_distribution pick_chirp(0.5);

  for (int slot = 0; slot < spec.max_events; ++slot) {
    if (!occurs(rng)) continue;
    const auto len = std::min(
        n - 1, static_cast<std::size_t>(std::llround(length_s(rng) * spec.sample_rate_hz)));
    std::uniform_int_distribution<std::size_t> pick_onset(0, n - len);
    std::size_t begin = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
      begin = pick_onset(rng);
      placed = std::none_of(out.events.begin(), out.events.end(), [&](const SynthEvent& e) {
        return begin < e.end && e.begin < begin + len;
      });
    }
    if (!placed) continue;

    std::string kind = spec.event_generator;
    if (kind == "mixed") kind = pick_chirp(rng) ? "chirp" : "tone";
    std::vector<double> wave = make_event(kind, len, spec.sample_rate_hz, rng);
    const double ebr = spec.ebr_db[pick_ebr(rng)];
    const double gain = std::pow(10.0, ebr / 20.0) * rms(out.background.data() + begin, len) /
                        rms(wave.data(), len);
    for (std::size_t i = 0; i < len; ++i) out.clip.samples[begin + i] += gain * wave[i];

    SynthEvent ev;
    ev.begin = begin;
    ev.end = begin + len;
    ev.target_ebr_db = ebr;
    ev.annotation.label = kind;
    ev.annotation.onset = static_cast<double>(begin) / spec.sample_rate_hz;
    ev.annotation.offset = static_cast<double>(begin + len) / spec.sample_rate_hz;
    out.events.push_back(std::move(ev));
  }
  std::sort(out.events.begin(), out.events.end(),
            [](const SynthEvent& a, const SynthEvent& b) { return a.begin < b.begin; });

  // Keep the mix inside [-1, 1); a common gain leaves every EBR unchanged.
  double peak = 0.0;
  for (double v : out.clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (double& v : out.clip.samples) v *= g;
    for (double& v : out.background) v *= g;
  }
  return out;
}

double realized_ebr_db(const LabeledClip& clip, std::size_t event) {
  const SynthEvent& e = clip.events.at(event);
  double fg = 0.0, bg = 0.0;
  for (std::size_t i = e.begin; i < e.end; ++i) {
    const double d = clip.clip.samples[i] - clip.background[i];
    fg += d * d;
    bg += clip.background[i] * clip.background[i];
  }
  return 10.0 * std::log10(fg / bg);
}

std::vector<ManifestRecord> synthesize_dataset(const SynthSpec& spec, std::size_t n_clips,
                                               const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clips", ec);
  if (ec) {
    throw std::runtime_error("cannot create " + (out_dir / "clips").string() + ": " + ec.message());
  }
  std::vector<ManifestRecord> records;
  records.reserve(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) {
    auto rng = clip_rng(spec.seed, i);
    const LabeledClip lc = synthesize_clip(spec, rng);
    char name[32];
    std::snprintf(name, sizeof name, "clip_%05zu.wav", i);
    const std::string rel = std::string("clips/") + name;
    write_wav(out_dir / rel, lc.clip);
    records.push_back({rel, lc.annotations()});
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  return records;
}

}  // namespace rcrnn
