#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace veil {

/// Lowercase hex SHA-1 of `bytes`.
std::string sha1_hex(const std::string& bytes);

/// Record written next to every command's outputs. The embedded flat config
/// plus seed is enough to rerun the command (`--config manifest.json`).
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;  // flat dotted keys
  uint64_t seed = 0;
  std::vector<std::string> outputs;  // paths relative to the output dir
  nlohmann::json summary = nlohmann::json::object();

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// True when `j` looks like a run manifest (then `j["config"]` is a config).
bool is_manifest(const nlohmann::json& j);

}  // namespace veil
