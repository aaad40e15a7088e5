// SPDX-License-Identifier: Apache-2.0
#include "rcrnn/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace rcrnn {

using nlohmann::json;

std::string to_json_line(const ManifestRecord& record) {
  json events = json::array();
  for (const auto& e : record.events) {
    json j = {{"class", e.label}, {"onset", e.onset}, {"offset", e.offset}};
    if (e.probability) j["probability"] = *e.probability;
    events.push_back(std::move(j));
  }
  return json{{"audio", record.audio}, {"events", std::move(events)}}.dump();
}

ManifestRecord parse_json_line(const std::string& line) {
  const json j = json::parse(line);
  ManifestRecord r;
  r.audio = j.at("audio").get<std::string>();
  for (const auto& e : j.at("events")) {
    EventAnnotation a;
    a.label = e.at("class").get<std::string>();
    a.onset = e.at("onset").get<double>();
    a.offset = e.at("offset").get<double>();
    if (!(a.onset < a.offset)) {
      throw std::invalid_argument("event onset " + std::to_string(a.onset) +
                                  " is not before offset " + std::to_string(a.offset));
    }
    if (e.contains("probability")) a.probability = e.at("probability").get<double>();
    r.events.push_back(std::move(a));
  }
  return r;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_json_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

}  // namespace rcrnn
