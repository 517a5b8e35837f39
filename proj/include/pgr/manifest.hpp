#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgr/errors.hpp"

namespace pgr::cli {

inline constexpr const char* kVersion = "pgrefine 1.0.0";

// FNV-1a over the raw bytes of a buffer.
inline uint64_t fnv1a64(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot digest input file: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (f.eof()) break;
  }
  return h;
}

inline std::string iso8601_utc(std::time_t t) {
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance record written next to each command's primary output.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  uint64_t master_seed = 0;
  std::time_t started_at = 0;
  std::vector<std::pair<std::string, uint64_t>> input_digests;

  void add_input(const std::string& path) {
    input_digests.emplace_back(path, fnv1a64_file(path));
  }

  // Atomic write: the JSON lands under a temporary name and is renamed
  // into place.
  void write(const std::string& path) const {
    nlohmann::json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["args"] = args;
    j["master_seed"] = master_seed;
    j["started_at"] = iso8601_utc(started_at);
    j["finished_at"] = iso8601_utc(std::time(nullptr));
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [p, h] : input_digests) {
      char hex[24];
      std::snprintf(hex, sizeof hex, "%016llx",
                    static_cast<unsigned long long>(h));
      inputs.push_back({{"path", p}, {"fnv1a64", hex}});
    }
    j["inputs"] = inputs;

    std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp);
      if (!f) throw input_error("cannot write manifest: " + tmp);
      f << j.dump(2) << "\n";
      if (!f) throw input_error("manifest write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
      throw input_error("cannot move manifest into place: " + path);
  }
};

}  // namespace pgr::cli
