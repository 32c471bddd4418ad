// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace dethub::engine {

// JSON-lines metrics stream, one object per line.
class MetricsLogger {
 public:
  explicit MetricsLogger(const std::string& path);
  void log(const nlohmann::json& record);
  const std::string& path() const { return path_; }

  static std::vector<nlohmann::json> read_jsonl(const std::string& path);

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace dethub::engine
