// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dethub/taxonomy/taxonomy.hpp"

namespace dethub::data {

// Per-image annotations. Boxes are absolute (x1, y1, x2, y2) pixels,
// clipped to the image; labels index the source vocabulary.
struct AnnotationRecord {
  int64_t image_id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  std::vector<std::array<double, 4>> boxes;
  std::vector<int> labels;
  std::string dataset;

  int object_count() const { return static_cast<int>(boxes.size()); }
};

struct LoadedDataset {
  std::string name;
  taxonomy::CategoryVocabulary vocabulary;
  std::vector<AnnotationRecord> records;       // one per image
  std::vector<double> category_frequencies;    // per-category image presence rate
  std::string root_dir;                        // file_name entries resolve against this

  int size() const { return static_cast<int>(records.size()); }
};

// Fraction of images containing at least one instance of each category.
std::vector<double> compute_category_frequencies(const std::vector<AnnotationRecord>& records,
                                                 int category_count);

// COCO-format JSON: `images`, `annotations` (xywh boxes), `categories`.
// Category order follows ascending category id; crowd annotations are
// dropped; boxes are converted to xyxy and clipped to the image.
LoadedDataset load_coco_format(const std::string& path);

void write_coco_format(const std::string& path, const std::string& dataset_name,
                       const taxonomy::CategoryVocabulary& vocab,
                       const std::vector<AnnotationRecord>& records);

}  // namespace dethub::data
