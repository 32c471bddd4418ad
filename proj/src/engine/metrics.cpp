// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/metrics.hpp"

#include "dethub/core/errors.hpp"

namespace dethub::engine {

MetricsLogger::MetricsLogger(const std::string& path) : path_(path), out_(path) {
  if (!out_) throw DataError("cannot open metrics file for writing: " + path);
}

void MetricsLogger::log(const nlohmann::json& record) {
  out_ << record.dump() << "\n";
  out_.flush();
}

std::vector<nlohmann::json> MetricsLogger::read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open metrics file: " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace dethub::engine
