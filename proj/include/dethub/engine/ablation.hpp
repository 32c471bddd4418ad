// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "dethub/engine/config.hpp"
#include "dethub/engine/map_eval.hpp"

namespace dethub::engine {

struct GridAxis {
  std::string key;  // config key, or "datasets" for dataset-combination rows
  std::vector<nlohmann::json> values;
};

struct GridSpec {
  std::string name;
  std::vector<GridAxis> axes;  // cartesian product

  static GridSpec from_json(const nlohmann::json& j);
};

struct AblationCell {
  nlohmann::json settings;                 // axis key -> value
  std::map<std::string, double> dataset_ap;  // per evaluated dataset, fraction
  std::string status;                      // "ok" or "failed: <code>"
};

struct AblationResult {
  std::string grid_name;
  std::vector<std::string> axis_keys;
  std::vector<std::string> dataset_names;
  std::vector<AblationCell> cells;
};

// Trains and evaluates every cell of the grid at the base config's step
// budget. Failed cells are recorded and the run continues. Cell output
// directories live under out_root/cell-<i>.
AblationResult run_ablation(const TrainConfig& base, const GridSpec& grid,
                            const std::string& out_root);

// deterministic CSV (fixed ordering and float formatting, AP x100)
std::string ablation_csv(const AblationResult& r);
nlohmann::json ablation_json(const AblationResult& r);

// Named grids mirroring the published ablation tables: "modes", "queries",
// "components", "layers", "kernels", "lengths", "combinations". The
// combinations grid enumerates dataset pairs plus the full join.
GridSpec builtin_grid(const std::string& name, const TrainConfig& base);

}  // namespace dethub::engine
