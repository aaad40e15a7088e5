// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rcrnn/features.hpp"

namespace rcrnn {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::int16_t to_pcm16(double s) {
  const double scaled = std::round(s * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

}  // namespace

std::vector<double> quantize_pcm16(const std::vector<double>& samples) {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = to_pcm16(samples[i]) / 32768.0;
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  auto fail = [&](const std::string& why) -> void {
    throw std::runtime_error("invalid WAV file " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    fail("missing RIFF/WAVE header");
  }
  bool have_fmt = false;
  AudioClip clip;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::size_t len = read_u32(b + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) fail("chunk '" + id + "' overruns the file");
    if (id == "fmt ") {
      if (len < 16) fail("short fmt chunk");
      const auto format = read_u16(b + body);
      const auto channels = read_u16(b + body + 2);
      const auto bits = read_u16(b + body + 14);
      if (format != 1) fail("only PCM (format 1) is supported, got format " + std::to_string(format));
      if (channels != 1) fail("expected mono, got " + std::to_string(channels) + " channels");
      if (bits != 16) fail("expected 16-bit samples, got " + std::to_string(bits));
      clip.sample_rate_hz = static_cast<int>(read_u32(b + body + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail("data chunk before fmt chunk");
      const std::size_t n = len / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(b + body + 2 * i));
        clip.samples[i] = raw / 32768.0;
      }
      return clip;
    }
    pos = body + len + (len & 1);
  }
  fail("no data chunk");
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples) put_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write WAV file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("failed writing WAV file " + path.string());
}

}  // namespace rcrnn
