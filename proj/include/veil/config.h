#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "veil/adversary.h"
#include "veil/losses.h"
#include "veil/trainer.h"

namespace veil {

/// Flat key/value configuration shared by all commands. Keys are dotted
/// section paths ("trainer.steps"); every key has a typed default, and
/// unknown keys are rejected.
class ExperimentConfig {
 public:
  struct Key {
    std::string name;
    nlohmann::json default_value;
    std::string help;
  };
  static const std::vector<Key>& keys();

  ExperimentConfig();

  /// Merges a flat JSON object from disk. Nested objects are flattened with
  /// dots so `{"trainer": {"steps": 5}}` also works.
  void merge_file(const std::filesystem::path& path);
  void merge(const nlohmann::json& flat);
  /// Parses `raw` according to the key's default type and stores it.
  void set(const std::string& key, const std::string& raw);

  const nlohmann::json& at(const std::string& key) const;
  double real(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::string text(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  uint64_t seed() const { return static_cast<uint64_t>(integer("seed")); }
  /// `output_dir`, overridden by VEIL_OUTPUT_ROOT when set.
  std::filesystem::path output_dir() const;

  trainer::TrainConfig train_config() const;
  losses::LossWeights loss_weights() const;
  adversary::AttackConfig attack_config() const;
  adversary::DetectorConfig detector_config() const;

  const nlohmann::json& values() const { return values_; }

 private:
  nlohmann::json values_;
};

/// Flattens nested objects into dotted keys; arrays stay leaves.
nlohmann::json flatten_config(const nlohmann::json& j);

}  // namespace veil
