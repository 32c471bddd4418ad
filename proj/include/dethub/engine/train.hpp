// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dethub/data/descriptor.hpp"
#include "dethub/data/sampler.hpp"
#include "dethub/engine/checkpoint.hpp"
#include "dethub/engine/config.hpp"

namespace dethub::engine {

// Datasets, embedder and conditioning descriptors shared by train/eval.
// Owns the frozen embedder; per-image prompts (instance-embedding mode)
// are cached by their category-set key.
class Workspace {
 public:
  explicit Workspace(const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  int dataset_count() const { return static_cast<int>(train_sets_.size()); }
  const data::LoadedDataset& train_set(int i) const { return train_sets_[static_cast<size_t>(i)]; }
  const data::LoadedDataset& val_set(int i) const { return val_sets_[static_cast<size_t>(i)]; }
  int dataset_index(const std::string& name) const;  // DataError("unknown-dataset") if missing

  const data::DatasetDescriptor& descriptor(int i) const {
    return descriptors_[static_cast<size_t>(i)];
  }
  const data::DatasetDescriptor& global_descriptor() const { return *global_; }
  // label index in dataset i -> column in the global prompt
  int global_category(int dataset_index, int label) const;

  const taxonomy::Embedder& embedder() const { return *embedder_; }

  // descriptor conditioning the forward pass for one training item
  const data::DatasetDescriptor& conditioning(int dataset_index,
                                              const data::AnnotationRecord& rec);
  // ground-truth labels remapped into the conditioning prompt's categories
  std::vector<int> conditioning_labels(int dataset_index, const data::AnnotationRecord& rec,
                                       const data::DatasetDescriptor& cond) const;

  // image pixels normalized to [-0.5, 0.5]
  Tensor load_image(int dataset_index, int record_index, bool val) const;

  nlohmann::json datasets_meta() const;

 private:
  TrainConfig cfg_;
  std::string mode_;
  std::vector<data::LoadedDataset> train_sets_;
  std::vector<data::LoadedDataset> val_sets_;
  std::vector<data::DatasetDescriptor> descriptors_;
  std::optional<data::DatasetDescriptor> global_;
  std::vector<std::vector<int>> to_global_;  // [dataset][label] -> global index
  std::unique_ptr<taxonomy::Embedder> embedder_;
  std::map<std::string, data::DatasetDescriptor> instance_cache_;
};

struct TrainResult {
  std::string checkpoint_dir;
  std::string metrics_path;
  int steps = 0;
  double first_loss = 0;
  double final_loss = 0;
  uint64_t embedder_hash_before = 0;
  uint64_t embedder_hash_after = 0;
};

// Full training loop: sampler plan, per-step adapt/forward/match/loss/step,
// milestone + final checkpoints, JSONL metrics. `resume_from` continues a
// run from a saved checkpoint (weights, optimizer moments, step counter).
TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_from = "");

}  // namespace dethub::engine
