// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/ablation.hpp"

#include <cstdio>
#include <filesystem>

#include "dethub/core/errors.hpp"
#include "dethub/detector/detector.hpp"
#include "dethub/engine/evaluate.hpp"

namespace dethub::engine {

using nlohmann::json;

GridSpec GridSpec::from_json(const json& j) {
  GridSpec spec;
  spec.name = j.value("name", "grid");
  if (!j.contains("axes") || !j["axes"].is_object())
    throw ConfigError("grid spec needs an 'axes' object");
  for (auto it = j["axes"].begin(); it != j["axes"].end(); ++it) {
    GridAxis axis;
    axis.key = it.key();
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("grid axis '" + axis.key + "' must be a non-empty array");
    for (const auto& v : it.value()) axis.values.push_back(v);
    spec.axes.push_back(std::move(axis));
  }
  if (spec.axes.empty()) throw ConfigError("grid spec has no axes");
  return spec;
}

namespace {
std::string value_str(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}
}  // namespace

AblationResult run_ablation(const TrainConfig& base, const GridSpec& grid,
                            const std::string& out_root) {
  namespace fs = std::filesystem;
  fs::create_directories(out_root);

  AblationResult result;
  result.grid_name = grid.name;
  for (const auto& axis : grid.axes) result.axis_keys.push_back(axis.key);
  for (const auto& d : base.datasets()) result.dataset_names.push_back(d.name);

  // cartesian product, first axis slowest (matches the papers' row order)
  std::vector<size_t> counter(grid.axes.size(), 0);
  auto advance = [&]() {
    for (size_t a = counter.size(); a-- > 0;) {
      if (++counter[a] < grid.axes[a].values.size()) return true;
      counter[a] = 0;
    }
    return false;
  };
  int cell_index = 0;
  do {
    AblationCell cell;
    TrainConfig cfg = base;
    for (size_t a = 0; a < grid.axes.size(); ++a) {
      const json& value = grid.axes[a].values[counter[a]];
      cell.settings[grid.axes[a].key] = value;
      // composite axis "key1|key2" with a paired value array sets several
      // keys per row (for table rows that toggle more than one flag)
      if (grid.axes[a].key.find('|') != std::string::npos) {
        std::vector<std::string> keys;
        std::string rest = grid.axes[a].key;
        size_t bar;
        while ((bar = rest.find('|')) != std::string::npos) {
          keys.push_back(rest.substr(0, bar));
          rest = rest.substr(bar + 1);
        }
        keys.push_back(rest);
        if (!value.is_array() || value.size() != keys.size())
          throw ConfigError("composite axis '" + grid.axes[a].key +
                            "' needs value arrays of matching length");
        for (size_t k = 0; k < keys.size(); ++k) cfg.set(keys[k], value[k]);
        continue;
      }
      if (grid.axes[a].key == "datasets") {
        if (!value.is_array()) throw ConfigError("'datasets' axis values must be name arrays");
        std::vector<TrainConfig::DatasetEntry> subset;
        for (const auto& name : value) {
          bool found = false;
          for (const auto& d : base.datasets())
            if (d.name == name.get<std::string>()) {
              subset.push_back(d);
              found = true;
            }
          if (!found)
            throw ConfigError("datasets axis references unknown dataset '" +
                              name.get<std::string>() + "'");
        }
        cfg.set_datasets(std::move(subset));
      } else {
        cfg.set(grid.axes[a].key, value);
      }
    }

    const std::string cell_dir = out_root + "/cell-" + std::to_string(cell_index);
    try {
      TrainResult tr = train(cfg, cell_dir);
      Workspace ws(cfg);
      ParamStore store;
      det::Detector model(store, cfg.detector_config(),
                          static_cast<uint64_t>(cfg.geti("seed")));
      store.load_values(load_checkpoint(tr.checkpoint_dir).weights);
      for (const auto& entry : cfg.datasets()) {
        EvalReport rep = evaluate_dataset(ws, model, ws.dataset_index(entry.name));
        cell.dataset_ap[entry.name] = rep.ap;
      }
      cell.status = "ok";
    } catch (const Error& e) {
      cell.status = "failed: " + e.code();
    }
    result.cells.push_back(std::move(cell));
    ++cell_index;
  } while (advance());
  return result;
}

std::string ablation_csv(const AblationResult& r) {
  std::string out = "grid";
  for (const auto& k : r.axis_keys) out += "," + k;
  for (const auto& d : r.dataset_names) out += ",ap_" + d;
  out += ",status\n";
  char buf[64];
  for (const auto& cell : r.cells) {
    out += r.grid_name;
    for (const auto& k : r.axis_keys) out += "," + value_str(cell.settings.at(k));
    for (const auto& d : r.dataset_names) {
      auto it = cell.dataset_ap.find(d);
      if (it == cell.dataset_ap.end()) {
        out += ",";
      } else {
        std::snprintf(buf, sizeof(buf), ",%.4f", it->second * 100.0);
        out += buf;
      }
    }
    out += "," + cell.status + "\n";
  }
  return out;
}

GridSpec builtin_grid(const std::string& name, const TrainConfig& base) {
  GridSpec spec;
  spec.name = name;
  if (name == "modes") {
    spec.axes.push_back({"adaptation.mode",
                         {json("instance-embedding"), json("global-embedding"),
                          json("query-adaptation")}});
  } else if (name == "queries") {
    spec.axes.push_back({"queries.count", {json(100), json(300)}});
  } else if (name == "components") {
    spec.axes.push_back({"adaptation.rpn|adaptation.decoder",
                         {json::array({true, true}), json::array({false, true}),
                          json::array({false, false})}});
  } else if (name == "layers") {
    spec.axes.push_back({"decoder.stages", {json(2), json(4), json(6), json(8)}});
  } else if (name == "kernels") {
    spec.axes.push_back({"dyconv.kernel_size", {json(1), json(3), json(5)}});
  } else if (name == "lengths") {
    spec.axes.push_back({"prompt.max_length", {json(128), json(256), json(512)}});
  } else if (name == "combinations") {
    const auto& ds = base.datasets();
    if (ds.size() < 2)
      throw ConfigError("combinations grid needs at least two configured datasets");
    GridAxis axis;
    axis.key = "datasets";
    for (size_t i = 0; i < ds.size(); ++i)
      for (size_t j = i + 1; j < ds.size(); ++j)
        axis.values.push_back(json::array({ds[i].name, ds[j].name}));
    if (ds.size() > 2) {
      json all = json::array();
      for (const auto& d : ds) all.push_back(d.name);
      axis.values.push_back(all);
    }
    spec.axes.push_back(std::move(axis));
  } else {
    throw ConfigError("unknown builtin grid '" + name +
                      "' (modes, queries, components, layers, kernels, lengths, combinations)");
  }
  return spec;
}

json ablation_json(const AblationResult& r) {
  json cells = json::array();
  for (const auto& cell : r.cells) {
    json aps;
    for (const auto& [name, ap] : cell.dataset_ap) aps[name] = ap;
    cells.push_back({{"settings", cell.settings}, {"ap", aps}, {"status", cell.status}});
  }
  return {{"grid", r.grid_name}, {"cells", cells}};
}

}  // namespace dethub::engine
