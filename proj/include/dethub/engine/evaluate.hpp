// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dethub/detector/detector.hpp"
#include "dethub/engine/map_eval.hpp"
#include "dethub/engine/train.hpp"

namespace dethub::engine {

// top-k (query, category) detections by pooled category score
std::vector<Detection> extract_detections(const det::DetectionOutput& out, int64_t image_id,
                                          int top_k);

// Runs predict over a dataset's validation split with the mode-appropriate
// prompt and scores only the dataset's own categories. In global-embedding
// mode category columns are projected out of the union prompt.
EvalReport evaluate_dataset(Workspace& ws, const det::Detector& model, int dataset_index,
                            std::vector<Detection>* exported = nullptr);

// Rebuilds the model from a checkpoint and evaluates one dataset. The
// embedder rebuilt from configuration must match the checkpoint's embedder
// id ("embedder-mismatch" otherwise). Writes eval-<dataset>.json and a
// predictions JSONL when out_dir is non-empty.
EvalReport evaluate_checkpoint(const std::string& checkpoint_dir,
                               const std::string& dataset_name, const std::string& out_dir,
                               const std::vector<std::string>& overrides = {});

}  // namespace dethub::engine
