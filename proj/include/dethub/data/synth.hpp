// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dethub/data/coco.hpp"

namespace dethub::data {

// Which shape classes a synthetic dataset annotates and under what label
// name (renames model taxonomy differences across datasets).
struct SynthDatasetSpec {
  std::string name;
  std::vector<std::pair<std::string, std::string>> annotated;  // (shape class, label name)
};

struct SynthSpec {
  int image_size = 128;
  int min_shapes = 1;
  int max_shapes = 5;
  double max_overlap_iou = 0.3;
  std::vector<std::string> shape_classes = {"circle", "square", "triangle"};
  std::vector<double> class_weights = {1.0, 1.0, 1.0};
  std::vector<SynthDatasetSpec> datasets;
  int train_images = 200;
  int val_images = 40;

  // A annotates {circle, square}; B annotates {square as "box", triangle};
  // a third dataset C annotates {circle as "disc", triangle}.
  static SynthSpec defaults(int num_datasets = 2);
  void validate() const;
};

// One generated dataset: per-dataset filtered annotations plus the
// ground-truth-complete reference records (labels index shape_classes).
struct SynthDataset {
  LoadedDataset train;
  LoadedDataset val;
  std::vector<AnnotationRecord> reference_train;
  std::vector<AnnotationRecord> reference_val;
  std::vector<Tensor> train_images;  // index-aligned with train.records
  std::vector<Tensor> val_images;
  std::vector<std::string> shape_classes;  // reference label names
};

// Renders colored shapes on noise backgrounds. All shape classes appear in
// every dataset's images; only the dataset's annotated subset produces
// labels, so foregrounds of one dataset are unlabeled background in another.
std::vector<SynthDataset> synth_conflict_datasets(const SynthSpec& spec, uint64_t seed);

// Writes <dir>/<name>/{instances_train.json, instances_val.json,
// reference_train.json, images/*.ppm}.
void write_synth_dataset(const std::string& dir, const SynthDataset& ds);

}  // namespace dethub::data
