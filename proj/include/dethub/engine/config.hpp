// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "dethub/data/sampler.hpp"
#include "dethub/detector/detector.hpp"
#include "dethub/taxonomy/embedder.hpp"

namespace dethub::engine {

struct ConfigKeyInfo {
  const char* key;
  const char* type;  // int | double | bool | string | double_list
  const char* default_value;
  const char* help;
};

// single source of truth for every config key (defaults, help, validation)
const std::vector<ConfigKeyInfo>& config_schema();

class TrainConfig {
 public:
  static TrainConfig defaults();
  static TrainConfig from_file(const std::string& path);

  // nested JSON object; unknown keys are rejected
  void apply_json(const nlohmann::json& tree, const std::string& source);
  // "dotted.key=value" override, value parsed by the schema type
  void apply_override(const std::string& assignment);

  int geti(const std::string& key) const;
  double getd(const std::string& key) const;
  bool getb(const std::string& key) const;
  std::string gets(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  void set(const std::string& key, const nlohmann::json& value);

  struct DatasetEntry {
    std::string name;
    std::string train_path;
    std::string val_path;
  };
  const std::vector<DatasetEntry>& datasets() const { return datasets_; }
  void set_datasets(std::vector<DatasetEntry> entries) { datasets_ = std::move(entries); }

  void validate() const;
  uint64_t config_hash() const;
  nlohmann::json to_json() const;  // nested, canonical key order

  // resolved sub-configs
  det::DetectorConfig detector_config() const;
  taxonomy::EmbedderSpec embedder_spec() const;
  data::SamplerConfig sampler_config() const;
  std::string adaptation_mode() const;

 private:
  std::map<std::string, nlohmann::json> values_;  // flat dotted keys
  std::vector<DatasetEntry> datasets_;
};

}  // namespace dethub::engine
