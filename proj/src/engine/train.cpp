// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "dethub/core/errors.hpp"
#include "dethub/data/image_io.hpp"
#include "dethub/detector/detector.hpp"
#include "dethub/engine/metrics.hpp"
#include "dethub/losses/losses.hpp"

namespace dethub::engine {

using nlohmann::json;

Workspace::Workspace(const TrainConfig& cfg) : cfg_(cfg), mode_(cfg.adaptation_mode()) {
  if (cfg_.datasets().empty()) throw ConfigError("no datasets configured");
  embedder_ = taxonomy::make_embedder(cfg_.embedder_spec());
  const int max_length = cfg_.geti("prompt.max_length");

  for (const auto& entry : cfg_.datasets()) {
    if (entry.train_path.empty())
      throw ConfigError("dataset '" + entry.name + "' has no train path");
    data::LoadedDataset train = data::load_coco_format(entry.train_path);
    train.name = entry.name;
    train.vocabulary.dataset_name = entry.name;
    data::LoadedDataset val;
    if (!entry.val_path.empty()) {
      val = data::load_coco_format(entry.val_path);
      val.name = entry.name;
      val.vocabulary.dataset_name = entry.name;
      if (val.vocabulary.categories != train.vocabulary.categories)
        throw DataError("train/val vocabulary mismatch for dataset " + entry.name);
    }
    descriptors_.push_back(data::build_descriptor(train, *embedder_, max_length));
    train_sets_.push_back(std::move(train));
    val_sets_.push_back(std::move(val));
  }

  // union vocabulary for the global-embedding baseline: dataset order then
  // category order, deduplicated by name
  taxonomy::CategoryVocabulary global_vocab;
  global_vocab.dataset_name = "global";
  to_global_.resize(train_sets_.size());
  for (size_t di = 0; di < train_sets_.size(); ++di) {
    for (const auto& name : train_sets_[di].vocabulary.categories) {
      auto it = std::find(global_vocab.categories.begin(), global_vocab.categories.end(), name);
      int idx;
      if (it == global_vocab.categories.end()) {
        idx = global_vocab.category_count();
        global_vocab.categories.push_back(name);
      } else {
        idx = static_cast<int>(it - global_vocab.categories.begin());
      }
      to_global_[di].push_back(idx);
    }
  }
  global_ = data::build_descriptor(global_vocab, *embedder_, max_length);
}

int Workspace::dataset_index(const std::string& name) const {
  for (size_t i = 0; i < train_sets_.size(); ++i)
    if (train_sets_[i].name == name) return static_cast<int>(i);
  throw DataError("unknown-dataset", "unknown dataset id '" + name + "'");
}

int Workspace::global_category(int dataset_index, int label) const {
  return to_global_[static_cast<size_t>(dataset_index)][static_cast<size_t>(label)];
}

const data::DatasetDescriptor& Workspace::conditioning(int dataset_index,
                                                       const data::AnnotationRecord& rec) {
  if (mode_ == "global-embedding") return *global_;
  if (mode_ == "instance-embedding" && !rec.labels.empty()) {
    // prompt over only the categories present in this image
    const auto& vocab = train_sets_[static_cast<size_t>(dataset_index)].vocabulary;
    std::vector<int> present;
    for (int l : rec.labels)
      if (std::find(present.begin(), present.end(), l) == present.end()) present.push_back(l);
    std::sort(present.begin(), present.end());
    std::string key = train_sets_[static_cast<size_t>(dataset_index)].name;
    taxonomy::CategoryVocabulary inst;
    inst.dataset_name = vocab.dataset_name;
    for (int l : present) {
      inst.categories.push_back(vocab.categories[static_cast<size_t>(l)]);
      key += "|" + inst.categories.back();
    }
    auto it = instance_cache_.find(key);
    if (it == instance_cache_.end()) {
      it = instance_cache_
               .emplace(key, data::build_descriptor(inst, *embedder_,
                                                    cfg_.geti("prompt.max_length")))
               .first;
    }
    return it->second;
  }
  return descriptors_[static_cast<size_t>(dataset_index)];
}

std::vector<int> Workspace::conditioning_labels(int dataset_index,
                                                const data::AnnotationRecord& rec,
                                                const data::DatasetDescriptor& cond) const {
  std::vector<int> out;
  out.reserve(rec.labels.size());
  if (mode_ == "global-embedding") {
    for (int l : rec.labels) out.push_back(global_category(dataset_index, l));
    return out;
  }
  if (&cond == &descriptors_[static_cast<size_t>(dataset_index)]) {
    out = rec.labels;
    return out;
  }
  // instance prompt: map by name
  const auto& vocab = train_sets_[static_cast<size_t>(dataset_index)].vocabulary;
  for (int l : rec.labels) {
    const std::string& name = vocab.categories[static_cast<size_t>(l)];
    auto it = std::find(cond.vocabulary.categories.begin(), cond.vocabulary.categories.end(),
                        name);
    if (it == cond.vocabulary.categories.end())
      throw DataError("instance prompt lost category " + name);
    out.push_back(static_cast<int>(it - cond.vocabulary.categories.begin()));
  }
  return out;
}

Tensor Workspace::load_image(int dataset_index, int record_index, bool val) const {
  const data::LoadedDataset& ds =
      val ? val_sets_[static_cast<size_t>(dataset_index)]
          : train_sets_[static_cast<size_t>(dataset_index)];
  const data::AnnotationRecord& rec = ds.records[static_cast<size_t>(record_index)];
  if (rec.file_name.empty())
    throw DataError("record " + std::to_string(rec.image_id) + " has no image file");
  Tensor img = data::read_ppm(ds.root_dir + "/" + rec.file_name);
  for (double& v : img.vec()) v -= 0.5;
  return img;
}

json Workspace::datasets_meta() const {
  json out = json::array();
  for (size_t i = 0; i < descriptors_.size(); ++i) {
    const auto& d = descriptors_[i];
    out.push_back({{"name", d.name},
                   {"categories", d.vocabulary.categories},
                   {"prompt", d.prompt.text},
                   {"token_count", d.prompt.token_count()},
                   {"truncated_categories", d.prompt.truncated_categories},
                   {"size", d.size}});
  }
  return out;
}

namespace {

Tensor gt_boxes_normalized(const data::AnnotationRecord& rec) {
  Tensor out({static_cast<int>(rec.boxes.size()), 4});
  for (size_t i = 0; i < rec.boxes.size(); ++i) {
    const auto& b = rec.boxes[i];
    const double w = rec.width, h = rec.height;
    out.at2(static_cast<int>(i), 0) = (b[0] + b[2]) / 2 / w;
    out.at2(static_cast<int>(i), 1) = (b[1] + b[3]) / 2 / h;
    out.at2(static_cast<int>(i), 2) = (b[2] - b[0]) / w;
    out.at2(static_cast<int>(i), 3) = (b[3] - b[1]) / h;
  }
  return out;
}

// epoch-indexed stream over sampler plans; plans are regenerated per epoch
// under seed + epoch so resumed runs replay the identical order
class PlanStream {
 public:
  PlanStream(const Workspace& ws, const data::SamplerConfig& base_cfg)
      : ws_(ws), base_cfg_(base_cfg) {
    refill();
  }

  const data::PlanItem& next() {
    if (cursor_ >= plan_.schedule.size()) {
      ++epoch_;
      refill();
    }
    return plan_.schedule[cursor_++];
  }

  void skip(int64_t count) {
    for (int64_t i = 0; i < count; ++i) next();
  }

 private:
  void refill() {
    data::SamplerConfig cfg = base_cfg_;
    cfg.seed = hash_combine(base_cfg_.seed, static_cast<uint64_t>(epoch_));
    std::vector<const data::LoadedDataset*> sets;
    for (int i = 0; i < ws_.dataset_count(); ++i) sets.push_back(&ws_.train_set(i));
    plan_ = data::make_sampler_plan(sets, cfg);
    cursor_ = 0;
  }

  const Workspace& ws_;
  data::SamplerConfig base_cfg_;
  data::SamplerPlan plan_;
  size_t cursor_ = 0;
  int epoch_ = 0;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_from) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);

  Workspace ws(cfg);
  ParamStore store;
  det::Detector model(store, cfg.detector_config(),
                      static_cast<uint64_t>(cfg.geti("seed")));
  AdamW optimizer(cfg.getd("optimizer.lr"), cfg.getd("optimizer.weight_decay"));

  const int total_steps = cfg.geti("train.steps");
  const int batch_size = cfg.geti("train.batch_size");
  int start_step = 0;
  if (!resume_from.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume_from);
    if (ck.meta.embedder_id != ws.embedder().id())
      throw ConfigError("embedder-mismatch",
                        "checkpoint was trained with embedder '" + ck.meta.embedder_id +
                            "' but the configuration builds '" + ws.embedder().id() + "'");
    store.load_values(ck.weights);
    if (!ck.optimizer_state.empty()) optimizer.load_state(store, ck.optimizer_state);
    start_step = ck.meta.step;
    if (start_step >= total_steps)
      throw ConfigError("checkpoint already covers the configured step budget");
  }

  const uint64_t embedder_hash_before = ws.embedder().weights_hash();
  MetricsLogger metrics(out_dir + "/metrics.jsonl");
  PlanStream stream(ws, cfg.sampler_config());
  stream.skip(static_cast<int64_t>(start_step) * batch_size);

  losses::CostWeights weights;
  weights.lambda_cls = cfg.getd("loss.lambda_cls");
  weights.lambda_l1 = cfg.getd("loss.lambda_l1");
  weights.lambda_giou = cfg.getd("loss.lambda_giou");
  const double clamp_eps = cfg.getd("loss.clamp_eps");
  const double clip_norm = cfg.getd("optimizer.clip_norm");
  const auto milestones = cfg.get_list("optimizer.milestones");
  const double lr_drop = cfg.getd("optimizer.lr_drop");
  const double base_lr = cfg.getd("optimizer.lr");
  const int metrics_every = cfg.geti("train.metrics_every");

  std::vector<int> milestone_steps;
  for (double m : milestones)
    milestone_steps.push_back(static_cast<int>(std::floor(m * total_steps)));

  TrainResult result;
  result.metrics_path = metrics.path();
  result.embedder_hash_before = embedder_hash_before;

  for (int step = start_step + 1; step <= total_steps; ++step) {
    store.zero_grads();
    std::vector<ad::Var> item_losses;
    double align_sum = 0, l1_sum = 0, giou_sum = 0;
    std::string batch_tag;
    int degenerate = 0;

    for (int b = 0; b < batch_size; ++b) {
      const data::PlanItem item = stream.next();
      if (!batch_tag.empty()) batch_tag += "+";
      batch_tag += item.dataset_name;
      const data::AnnotationRecord& rec =
          ws.train_set(item.dataset_index).records[static_cast<size_t>(item.record_index)];
      Tensor image = ws.load_image(item.dataset_index, item.record_index, /*val=*/false);
      const data::DatasetDescriptor& cond = ws.conditioning(item.dataset_index, rec);
      const std::vector<int> labels = ws.conditioning_labels(item.dataset_index, rec, cond);

      ad::Var img = ad::constant(image);
      ad::Var e = ad::constant(cond.embedding.e);
      ad::Var fe = ad::constant(cond.embedding.language_features);
      det::ForwardResult fr = model.forward(img, e, fe, cond.embedding.valid_mask);
      degenerate += fr.degenerate_clamped;

      std::vector<losses::StageForLoss> stages;
      stages.push_back({fr.rpn.boxes, nullptr});
      for (const auto& st : fr.stages) stages.push_back({st.boxes, st.token_scores});
      Tensor gts = rec.boxes.empty() ? Tensor() : gt_boxes_normalized(rec);
      losses::TotalLossResult lr = losses::total_loss(stages, gts, labels, cond.prompt,
                                                      cond.embedding.valid_mask, weights,
                                                      clamp_eps);
      align_sum += lr.align_value;
      l1_sum += lr.l1_value;
      giou_sum += lr.giou_value;
      item_losses.push_back(lr.total);
    }

    ad::Var batch_loss = ad::scale(ad::add_n(item_losses), 1.0 / batch_size);
    const double loss_value = batch_loss->scalar();
    if (!std::isfinite(loss_value))
      throw NumericError("non-finite loss at step " + std::to_string(step) + " (align=" +
                         std::to_string(align_sum) + ", l1=" + std::to_string(l1_sum) +
                         ", giou=" + std::to_string(giou_sum) + ", batch=" + batch_tag + ")");
    ad::backward(batch_loss);
    const double grad_norm = clip_grad_norm(store, clip_norm);
    if (!std::isfinite(grad_norm))
      throw NumericError("non-finite gradient at step " + std::to_string(step));

    const double lr_now = lr_at_step(base_lr, step, total_steps, milestones, lr_drop);
    optimizer.step(store, lr_now / base_lr);

    if (step == 1) result.first_loss = loss_value;
    result.final_loss = loss_value;

    if (step == 1 || step == total_steps || step % metrics_every == 0) {
      metrics.log({{"step", step},
                   {"lr", lr_now},
                   {"loss_total", loss_value},
                   {"loss_align", align_sum / batch_size},
                   {"loss_l1", l1_sum / batch_size},
                   {"loss_giou", giou_sum / batch_size},
                   {"grad_norm", grad_norm},
                   {"degenerate_boxes", degenerate},
                   {"datasets", batch_tag}});
    }

    const bool at_milestone =
        std::find(milestone_steps.begin(), milestone_steps.end(), step) != milestone_steps.end();
    if (at_milestone || step == total_steps) {
      CheckpointMeta meta;
      meta.embedder_id = ws.embedder().id();
      meta.config_hash = cfg.config_hash();
      meta.config = cfg.to_json();
      meta.datasets_meta = ws.datasets_meta();
      meta.step = step;
      meta.total_steps = total_steps;
      meta.extra = {{"milestone", at_milestone}};
      const std::string dir = step == total_steps
                                  ? out_dir + "/checkpoint-final"
                                  : out_dir + "/checkpoint-step-" + std::to_string(step);
      save_checkpoint(dir, store, &optimizer, meta);
      if (step == total_steps) result.checkpoint_dir = dir;
    }
  }

  result.steps = total_steps;
  result.embedder_hash_after = ws.embedder().weights_hash();
  if (result.embedder_hash_after != embedder_hash_before)
    throw NumericError("frozen embedder changed during training");
  return result;
}

}  // namespace dethub::engine
