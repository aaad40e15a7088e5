// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/archive.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "rcrnn/config.hpp"
#include "rcrnn/detector.hpp"

namespace rcrnn {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'C', 'R', 'N', 'N', 'W', 'A', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return sha256_hex(bytes);
}

std::string save_archive(const std::filesystem::path& path, const ModelConfig& cfg,
                         const Parameters& params) {
  std::vector<std::uint8_t> payload;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    for (double v : t.data()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    offset += t.size();
  }
  const std::string checksum = sha256_hex(payload);
  const std::string header = nlohmann::json{{"format_version", kArchiveFormatVersion},
                                            {"model_config", to_json(cfg)},
                                            {"tensors", std::move(tensors)},
                                            {"payload_sha256", checksum}}
                                 .dump();
  std::vector<std::uint8_t> head(kMagic.begin(), kMagic.end());
  put_u64(head, header.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write archive " + path.string());
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("failed writing archive " + path.string());
  return checksum;
}

WeightArchive load_archive(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  auto fail = [&](const std::string& why) -> void {
    throw std::runtime_error("weight archive " + path.string() + ": " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    fail("not a weight archive (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }

  WeightArchive a;
  a.format_version = header.value("format_version", -1);
  if (a.format_version != kArchiveFormatVersion) {
    fail("unsupported format version " + std::to_string(a.format_version));
  }
  const std::span<const std::uint8_t> payload(bytes.data() + 16 + header_len,
                                              bytes.size() - 16 - header_len);
  a.payload_sha256 = header.at("payload_sha256").get<std::string>();
  if (sha256_hex(payload) != a.payload_sha256) fail("payload checksum mismatch");
  a.config = model_config_from_json(header.at("model_config"));

  const Parameters reference = init_parameters(a.config, 0);
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    if (!reference.contains(name)) fail("unexpected tensor '" + name + "' for the stored config");
    if (reference.at(name).shape() != shape || shape_size(shape) != count) {
      fail("tensor '" + name + "' has shape " + shape_string(shape) + " but the stored config needs " +
           shape_string(reference.at(name).shape()));
    }
    if ((offset + count) * 8 > payload.size()) fail("tensor '" + name + "' runs past the payload");
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<double>(get_u64(payload.data() + (offset + i) * 8));
    }
    a.params.add(name, Tensor(shape, std::move(values)));
  }
  for (const auto& [name, t] : reference) {
    if (!a.params.contains(name)) fail("missing tensor '" + name + "'");
  }
  for (auto& [name, t] : a.params) t.set_requires_grad(false);
  return a;
}

}  // namespace rcrnn
