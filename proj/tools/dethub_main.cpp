// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
//
// dethub: single entry point for data synthesis, training, evaluation,
// ablation grids and result plotting.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dethub/core/errors.hpp"
#include "dethub/data/synth.hpp"
#include "dethub/engine/ablation.hpp"
#include "dethub/engine/evaluate.hpp"
#include "dethub/engine/metrics.hpp"
#include "dethub/engine/train.hpp"
#include "dethub/plot/svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dethub;

namespace {

std::string default_out(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("DETHUB_OUT")) return env;
  return "dethub-out";
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const json& config, const json& extra) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "manifest.json");
  f << json{{"command", command}, {"config", config}, {"extra", extra}}.dump(1) << "\n";
}

std::string schema_footer() {
  std::string out = "Config keys (override with --set key=value):\n";
  for (const auto& e : engine::config_schema()) {
    out += "  ";
    out += e.key;
    out += " (";
    out += e.type;
    out += ", default ";
    out += e.default_value;
    out += "): ";
    out += e.help;
    out += "\n";
  }
  out += "  datasets (array of {name, train, val} entries)\n";
  return out;
}

engine::TrainConfig load_config(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  engine::TrainConfig cfg = config_path.empty() ? engine::TrainConfig::defaults()
                                                : engine::TrainConfig::from_file(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

int run_synth(const std::string& out, uint64_t seed, int num_datasets, int train_images,
              int val_images, int image_size) {
  data::SynthSpec spec = data::SynthSpec::defaults(num_datasets);
  spec.train_images = train_images;
  spec.val_images = val_images;
  spec.image_size = image_size;
  auto sets = data::synth_conflict_datasets(spec, seed);
  json dataset_entries = json::array();
  for (const auto& ds : sets) {
    data::write_synth_dataset(out, ds);
    dataset_entries.push_back(
        {{"name", ds.train.name},
         {"train", (fs::path(out) / ds.train.name / "instances_train.json").string()},
         {"val", (fs::path(out) / ds.train.name / "instances_val.json").string()}});
  }
  // ready-to-train config stub pointing at the generated data
  json config_stub = {{"datasets", dataset_entries}};
  {
    std::ofstream f(fs::path(out) / "synth-config.json");
    f << config_stub.dump(1) << "\n";
  }
  write_manifest(out, "synth-data",
                 {{"seed", seed},
                  {"datasets", num_datasets},
                  {"train_images", train_images},
                  {"val_images", val_images},
                  {"image_size", image_size}},
                 {{"dataset_names", [&] {
                     json names = json::array();
                     for (const auto& ds : sets) names.push_back(ds.train.name);
                     return names;
                   }()}});
  std::cout << json{{"out", out}, {"datasets", dataset_entries}}.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dethub: unified multi-dataset detector with query adaptation on language "
               "embeddings"};
  app.require_subcommand(1);
  app.footer(schema_footer());

  // ---- synth-data ----
  auto* synth = app.add_subcommand("synth-data", "generate synthetic conflicting datasets");
  std::string synth_out;
  uint64_t synth_seed = 0;
  int synth_datasets = 2, synth_train = 200, synth_val = 40, synth_size = 128;
  synth->add_option("--out", synth_out, "output directory (or DETHUB_OUT)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--datasets", synth_datasets, "number of datasets (2 or 3)");
  synth->add_option("--train-images", synth_train, "training images per dataset");
  synth->add_option("--val-images", synth_val, "validation images per dataset");
  synth->add_option("--image-size", synth_size, "square image size in pixels");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  std::string train_config, train_out, train_resume;
  std::vector<std::string> train_sets;
  train_cmd->add_option("--config", train_config, "JSON config file");
  train_cmd->add_option("--set", train_sets, "dotted-key overrides, key=value");
  train_cmd->add_option("--out", train_out, "output directory (or DETHUB_OUT)");
  train_cmd->add_option("--resume", train_resume, "checkpoint directory to resume from");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one dataset");
  std::string eval_checkpoint, eval_dataset, eval_out;
  std::vector<std::string> eval_sets;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "dataset name")->required();
  eval_cmd->add_option("--out", eval_out, "output directory (or DETHUB_OUT)");
  eval_cmd->add_option("--set", eval_sets, "config overrides applied before evaluation");

  // ---- ablate ----
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  std::string ablate_config, ablate_out, ablate_grid_file, ablate_builtin;
  std::vector<std::string> ablate_sets;
  ablate_cmd->add_option("--config", ablate_config, "JSON config file");
  ablate_cmd->add_option("--set", ablate_sets, "dotted-key overrides");
  ablate_cmd->add_option("--out", ablate_out, "output directory (or DETHUB_OUT)");
  ablate_cmd->add_option("--grid", ablate_grid_file, "grid spec JSON file");
  ablate_cmd->add_option("--builtin", ablate_builtin,
                         "named grid: modes|queries|components|layers|kernels|lengths|"
                         "combinations");

  // ---- plot ----
  auto* plot_cmd = app.add_subcommand("plot", "render results to SVG");
  std::string plot_kind, plot_out;
  std::vector<std::string> plot_inputs;
  plot_cmd->add_option("--kind", plot_kind, "loss-curve | ablation-bars | joint-vs-separate")
      ->required();
  plot_cmd->add_option("--out", plot_out, "output directory (or DETHUB_OUT)");
  plot_cmd->add_option("inputs", plot_inputs, "input files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (synth->parsed())
      return run_synth(default_out(synth_out), synth_seed, synth_datasets, synth_train,
                       synth_val, synth_size);

    if (train_cmd->parsed()) {
      engine::TrainConfig cfg = load_config(train_config, train_sets);
      const std::string out = default_out(train_out);
      write_manifest(out, "train", cfg.to_json(), {{"resume", train_resume}});
      engine::TrainResult r = engine::train(cfg, out, train_resume);
      std::cout << json{{"checkpoint", r.checkpoint_dir},
                        {"metrics", r.metrics_path},
                        {"steps", r.steps},
                        {"final_loss", r.final_loss}}
                       .dump(1)
                << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const std::string out = default_out(eval_out);
      write_manifest(out, "eval",
                     {{"checkpoint", eval_checkpoint}, {"dataset", eval_dataset}},
                     {{"overrides", eval_sets}});
      engine::EvalReport rep =
          engine::evaluate_checkpoint(eval_checkpoint, eval_dataset, out, eval_sets);
      std::cout << rep.to_json().dump(1) << "\n";
      return 0;
    }

    if (ablate_cmd->parsed()) {
      engine::TrainConfig cfg = load_config(ablate_config, ablate_sets);
      engine::GridSpec grid;
      if (!ablate_builtin.empty()) {
        grid = engine::builtin_grid(ablate_builtin, cfg);
      } else if (!ablate_grid_file.empty()) {
        std::ifstream f(ablate_grid_file);
        if (!f) throw ConfigError("cannot open grid file: " + ablate_grid_file);
        grid = engine::GridSpec::from_json(json::parse(f));
      } else {
        throw ConfigError("ablate needs --grid or --builtin");
      }
      const std::string out = default_out(ablate_out);
      write_manifest(out, "ablate", cfg.to_json(), {{"grid", grid.name}});
      engine::AblationResult r = engine::run_ablation(cfg, grid, out);
      const std::string csv = engine::ablation_csv(r);
      {
        std::ofstream f(fs::path(out) / (grid.name + ".csv"));
        f << csv;
        std::ofstream jf(fs::path(out) / (grid.name + ".json"));
        jf << engine::ablation_json(r).dump(1) << "\n";
      }
      std::cout << csv;
      return 0;
    }

    if (plot_cmd->parsed()) {
      const std::string out = default_out(plot_out);
      fs::create_directories(out);
      const std::string target = (fs::path(out) / (plot_kind + ".svg")).string();
      if (plot_kind == "loss-curve") {
        if (plot_inputs.empty()) throw DataError("loss-curve needs a metrics file");
        plot::plot_loss_curve(engine::MetricsLogger::read_jsonl(plot_inputs[0]), target);
      } else if (plot_kind == "ablation-bars") {
        if (plot_inputs.empty()) throw DataError("ablation-bars needs a csv file");
        std::ifstream f(plot_inputs[0]);
        if (!f) throw DataError("cannot open " + plot_inputs[0]);
        std::string csv((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
        plot::plot_ablation_bars(csv, target);
      } else if (plot_kind == "joint-vs-separate") {
        if (plot_inputs.size() < 2)
          throw DataError("joint-vs-separate needs at least two eval reports");
        std::vector<std::string> datasets, series;
        std::map<std::string, std::map<std::string, double>> by_ds;
        for (const auto& path : plot_inputs) {
          std::ifstream f(path);
          if (!f) throw DataError("cannot open " + path);
          engine::EvalReport rep = engine::EvalReport::from_json(json::parse(f));
          const std::string label = fs::path(path).stem().string();
          if (std::find(series.begin(), series.end(), label) == series.end())
            series.push_back(label);
          if (std::find(datasets.begin(), datasets.end(), rep.dataset) == datasets.end())
            datasets.push_back(rep.dataset);
          by_ds[rep.dataset][label] = rep.ap * 100.0;
        }
        std::vector<std::vector<double>> values;
        for (const auto& ds : datasets) {
          std::vector<double> row;
          for (const auto& s : series) {
            auto it = by_ds[ds].find(s);
            row.push_back(it == by_ds[ds].end() ? 0.0 : it->second);
          }
          values.push_back(std::move(row));
        }
        plot::plot_grouped_bars(datasets, series, values, "joint vs separate", "AP x100",
                                target);
      } else {
        throw ConfigError("unknown plot kind '" + plot_kind + "'");
      }
      write_manifest(out, "plot", {{"kind", plot_kind}, {"inputs", plot_inputs}}, {});
      std::cout << json{{"plot", target}}.dump() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cout << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cout << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return 3;
  } catch (const Error& e) {  // shape / numeric
    std::cout << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return 4;
  }
  return 0;
}
