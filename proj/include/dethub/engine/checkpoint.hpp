// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "dethub/core/params.hpp"
#include "dethub/engine/optimizer.hpp"

namespace dethub::engine {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int version = kCheckpointVersion;
  std::string embedder_id;
  uint64_t config_hash = 0;
  nlohmann::json config;         // full resolved config
  nlohmann::json datasets_meta;  // descriptor summaries
  int step = 0;
  int total_steps = 0;
  nlohmann::json extra;          // free-form training history metadata
};

void save_checkpoint(const std::string& dir, const ParamStore& store, const AdamW* optimizer,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::vector<std::pair<std::string, Tensor>> weights;
  std::vector<std::pair<std::string, Tensor>> optimizer_state;  // empty if absent
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace dethub::engine
