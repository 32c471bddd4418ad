// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/evaluate.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "dethub/core/errors.hpp"

namespace dethub::engine {

using nlohmann::json;

std::vector<Detection> extract_detections(const det::DetectionOutput& out, int64_t image_id,
                                          int top_k) {
  struct Scored {
    int q, c;
    double score;
  };
  const int nq = out.category_scores.dim(0);
  const int nc = out.category_scores.dim(1);
  std::vector<Scored> all;
  all.reserve(static_cast<size_t>(nq) * nc);
  for (int q = 0; q < nq; ++q)
    for (int c = 0; c < nc; ++c) all.push_back({q, c, out.category_scores.at2(q, c)});
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.q != b.q) return a.q < b.q;
    return a.c < b.c;
  });
  if (static_cast<int>(all.size()) > top_k) all.resize(static_cast<size_t>(top_k));

  std::vector<Detection> dets;
  dets.reserve(all.size());
  for (const auto& s : all) {
    Detection d;
    d.image_id = image_id;
    d.category = s.c;
    d.score = s.score;
    for (int k = 0; k < 4; ++k) d.box[static_cast<size_t>(k)] = out.boxes.at2(s.q, k);
    dets.push_back(d);
  }
  return dets;
}

EvalReport evaluate_dataset(Workspace& ws, const det::Detector& model, int dataset_index,
                            std::vector<Detection>* exported) {
  const data::LoadedDataset& val = ws.val_set(dataset_index);
  if (val.records.empty())
    throw DataError("dataset '" + ws.train_set(dataset_index).name +
                    "' has no validation split");
  const std::string mode = ws.config().adaptation_mode();
  const data::DatasetDescriptor& cond =
      mode == "global-embedding" ? ws.global_descriptor() : ws.descriptor(dataset_index);
  const data::DatasetDescriptor& own = ws.descriptor(dataset_index);
  const int top_k = ws.config().geti("predict.top_k");

  std::vector<Detection> dets;
  for (size_t ri = 0; ri < val.records.size(); ++ri) {
    Tensor image = ws.load_image(dataset_index, static_cast<int>(ri), /*val=*/true);
    det::DetectionOutput out = model.predict(image, cond);
    if (mode == "global-embedding") {
      // keep only this dataset's categories, in its own column order
      const int nq = out.category_scores.dim(0);
      const int nc = own.vocabulary.category_count();
      Tensor projected({nq, nc});
      for (int c = 0; c < nc; ++c) {
        const int g = ws.global_category(dataset_index, c);
        for (int q = 0; q < nq; ++q) projected.at2(q, c) = out.category_scores.at2(q, g);
      }
      out.category_scores = std::move(projected);
    }
    auto img_dets = extract_detections(out, val.records[ri].image_id, top_k);
    dets.insert(dets.end(), img_dets.begin(), img_dets.end());
  }
  if (exported) *exported = dets;

  EvalReport report = compute_map(dets, val.records, own.vocabulary.categories,
                                  coco_iou_thresholds());
  report.dataset = own.name;
  return report;
}

EvalReport evaluate_checkpoint(const std::string& checkpoint_dir,
                               const std::string& dataset_name, const std::string& out_dir,
                               const std::vector<std::string>& overrides) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_dir);
  TrainConfig cfg = TrainConfig::defaults();
  cfg.apply_json(ck.meta.config, checkpoint_dir + "/manifest.json");
  for (const auto& o : overrides) cfg.apply_override(o);

  Workspace ws(cfg);
  if (ws.embedder().id() != ck.meta.embedder_id)
    throw ConfigError("embedder-mismatch",
                      "checkpoint embeddings come from '" + ck.meta.embedder_id +
                          "' but the evaluation configuration builds '" + ws.embedder().id() +
                          "'");
  const int dataset_index = ws.dataset_index(dataset_name);

  ParamStore store;
  det::Detector model(store, cfg.detector_config(), static_cast<uint64_t>(cfg.geti("seed")));
  store.load_values(ck.weights);

  std::vector<Detection> dets;
  EvalReport report = evaluate_dataset(ws, model, dataset_index, &dets);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream rf(fs::path(out_dir) / ("eval-" + dataset_name + ".json"));
    rf << report.to_json().dump(1) << "\n";
    std::ofstream pf(fs::path(out_dir) / ("predictions-" + dataset_name + ".jsonl"));
    const auto& names = ws.descriptor(dataset_index).vocabulary.categories;
    for (const auto& d : dets) {
      pf << json{{"image_id", d.image_id},
                 {"dataset", dataset_name},
                 {"category", names[static_cast<size_t>(d.category)]},
                 {"category_index", d.category},
                 {"score", d.score},
                 {"box", {d.box[0], d.box[1], d.box[2], d.box[3]}}}
                .dump()
         << "\n";
    }
  }
  return report;
}

}  // namespace dethub::engine
