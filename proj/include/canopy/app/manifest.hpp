#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "canopy/core/io.hpp"
#include "canopy/error.hpp"

namespace canopy::app {

inline constexpr const char* kVersion = "0.1.0";

// FNV-1a over the file bytes, as 16 hex digits.
inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot hash " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 0x100000001b3ULL;
    }
  }
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

struct FileRecord {
  std::string path;
  std::string hash;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // command line without --out and --config
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  double wall_time_s = 0.0;
  std::string version = kVersion;
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  auto files = [](const std::vector<FileRecord>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const FileRecord& f : v) a.push_back({{"path", f.path}, {"hash", f.hash}});
    return a;
  };
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["args"] = m.args;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["out_dir"] = m.out_dir;
  j["inputs"] = files(m.inputs);
  j["outputs"] = files(m.outputs);
  j["wall_time_s"] = m.wall_time_s;
  j["version"] = m.version;
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  io::write_file_atomic(path, [&](std::ostream& out) { out << to_json(m).dump(2) << '\n'; });
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threads = j.at("threads").get<int>();
    m.out_dir = j.at("out_dir").get<std::string>();
    for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("hash")});
    for (const auto& f : j.at("outputs")) m.outputs.push_back({f.at("path"), f.at("hash")});
    m.wall_time_s = j.at("wall_time_s").get<double>();
    m.version = j.at("version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": not a run manifest (" + e.what() + ")");
  }
  return m;
}

}  // namespace canopy::app
