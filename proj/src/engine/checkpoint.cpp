// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "dethub/core/errors.hpp"

namespace dethub::engine {

using nlohmann::json;

void save_checkpoint(const std::string& dir, const ParamStore& store, const AdamW* optimizer,
                     const CheckpointMeta& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_tensor_blob((fs::path(dir) / "weights.bin").string(), store.state());
  if (optimizer)
    write_tensor_blob((fs::path(dir) / "optimizer.bin").string(), optimizer->state(store));

  json manifest = {{"version", meta.version},
                   {"embedder_id", meta.embedder_id},
                   {"config_hash", meta.config_hash},
                   {"config", meta.config},
                   {"datasets", meta.datasets_meta},
                   {"step", meta.step},
                   {"total_steps", meta.total_steps},
                   {"extra", meta.extra},
                   {"weights_hash", store.values_hash()}};
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw DataError("cannot write checkpoint manifest in " + dir);
  f << manifest.dump(1) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream f(root / "manifest.json");
  if (!f) throw DataError("not a checkpoint directory (no manifest.json): " + dir);
  json manifest;
  try {
    manifest = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("invalid checkpoint manifest in " + dir + ": " + e.what());
  }
  LoadedCheckpoint out;
  out.meta.version = manifest.value("version", 0);
  if (out.meta.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(out.meta.version));
  out.meta.embedder_id = manifest.value("embedder_id", "");
  out.meta.config_hash = manifest.value("config_hash", 0ULL);
  out.meta.config = manifest.value("config", json::object());
  out.meta.datasets_meta = manifest.value("datasets", json::array());
  out.meta.step = manifest.value("step", 0);
  out.meta.total_steps = manifest.value("total_steps", 0);
  out.meta.extra = manifest.value("extra", json::object());
  out.weights = read_tensor_blob((root / "weights.bin").string());
  if (fs::exists(root / "optimizer.bin"))
    out.optimizer_state = read_tensor_blob((root / "optimizer.bin").string());
  return out;
}

}  // namespace dethub::engine
