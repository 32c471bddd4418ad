// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dethub/data/coco.hpp"

namespace dethub::engine {

struct Detection {
  int64_t image_id = 0;
  int category = 0;
  double score = 0;
  std::array<double, 4> box{};  // xyxy absolute
};

// Per-dataset evaluation report. AP values are fractions in [0, 1];
// presentation multiplies by 100. Categories without ground-truth
// instances carry -1 and are excluded from the means.
struct EvalReport {
  std::string dataset;
  double ap = 0;
  double ap50 = 0;
  double ap75 = 0;
  std::vector<double> per_category_ap;
  std::vector<std::string> category_names;
  int image_count = 0;
  int gt_count = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

std::vector<double> coco_iou_thresholds();  // 0.50 : 0.05 : 0.95

double iou_xyxy(const std::array<double, 4>& a, const std::array<double, 4>& b);

// COCO-style mAP: per category and IoU threshold, detections sorted by
// descending score are greedily matched to the best unmatched ground truth;
// AP is 101-point interpolated; means skip empty categories.
EvalReport compute_map(const std::vector<Detection>& detections,
                       const std::vector<data::AnnotationRecord>& ground_truth,
                       const std::vector<std::string>& category_names,
                       const std::vector<double>& iou_thresholds);

}  // namespace dethub::engine
