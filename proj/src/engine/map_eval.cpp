// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/map_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dethub/core/errors.hpp"

namespace dethub::engine {

std::vector<double> coco_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

double iou_xyxy(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

// 101-point interpolated AP from (recall, precision) samples at each
// detection prefix
double ap_101(const std::vector<char>& tp_flags, int gt_count) {
  if (gt_count == 0) return -1.0;
  std::vector<double> precision, recall;
  int tp = 0;
  for (size_t k = 0; k < tp_flags.size(); ++k) {
    if (tp_flags[k]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / gt_count);
  }
  // monotone envelope from the right
  for (int k = static_cast<int>(precision.size()) - 2; k >= 0; --k)
    precision[static_cast<size_t>(k)] =
        std::max(precision[static_cast<size_t>(k)], precision[static_cast<size_t>(k) + 1]);
  double ap = 0;
  size_t idx = 0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    while (idx < recall.size() && recall[idx] < target - 1e-12) ++idx;
    ap += idx < precision.size() ? precision[idx] : 0.0;
  }
  return ap / 101.0;
}

}  // namespace

EvalReport compute_map(const std::vector<Detection>& detections,
                       const std::vector<data::AnnotationRecord>& ground_truth,
                       const std::vector<std::string>& category_names,
                       const std::vector<double>& iou_thresholds) {
  const int num_cats = static_cast<int>(category_names.size());
  EvalReport report;
  report.category_names = category_names;
  report.per_category_ap.assign(static_cast<size_t>(num_cats), -1.0);
  report.image_count = static_cast<int>(ground_truth.size());

  for (const auto& d : detections) {
    if (!(d.box[2] > d.box[0]) || !(d.box[3] > d.box[1]) || !std::isfinite(d.score))
      throw DataError("malformed detection box for image " + std::to_string(d.image_id));
    if (d.category < 0 || d.category >= num_cats)
      throw DataError("detection category out of range: " + std::to_string(d.category));
  }

  // index ground truth per (image, category)
  std::map<std::pair<int64_t, int>, std::vector<std::array<double, 4>>> gt_by_img_cat;
  std::vector<int> gt_count(static_cast<size_t>(num_cats), 0);
  for (const auto& rec : ground_truth)
    for (size_t i = 0; i < rec.boxes.size(); ++i) {
      gt_by_img_cat[{rec.image_id, rec.labels[i]}].push_back(rec.boxes[i]);
      gt_count[static_cast<size_t>(rec.labels[i])]++;
      report.gt_count++;
    }

  const int thr50 = 0;
  const int thr75 = 5;  // indices into coco thresholds
  std::vector<double> ap_sum_per_thr(iou_thresholds.size(), 0.0);
  int cats_with_gt = 0;

  for (int c = 0; c < num_cats; ++c) {
    if (gt_count[static_cast<size_t>(c)] == 0) continue;  // excluded per convention
    ++cats_with_gt;
    // detections of this category, stable order: score desc, image, input order
    std::vector<const Detection*> dets;
    for (const auto& d : detections)
      if (d.category == c) dets.push_back(&d);
    std::stable_sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) {
      if (a->score != b->score) return a->score > b->score;
      return a->image_id < b->image_id;
    });

    double ap_mean = 0;
    for (size_t ti = 0; ti < iou_thresholds.size(); ++ti) {
      const double thr = iou_thresholds[ti];
      std::map<int64_t, std::vector<char>> used;
      std::vector<char> tp_flags;
      tp_flags.reserve(dets.size());
      for (const Detection* d : dets) {
        auto git = gt_by_img_cat.find({d->image_id, c});
        bool matched = false;
        if (git != gt_by_img_cat.end()) {
          auto& flags = used[d->image_id];
          if (flags.empty()) flags.assign(git->second.size(), 0);
          double best = thr;
          int best_idx = -1;
          for (size_t g = 0; g < git->second.size(); ++g) {
            if (flags[g]) continue;
            const double v = iou_xyxy(d->box, git->second[g]);
            if (v >= best) {
              best = v;
              best_idx = static_cast<int>(g);
            }
          }
          if (best_idx >= 0) {
            flags[static_cast<size_t>(best_idx)] = 1;
            matched = true;
          }
        }
        tp_flags.push_back(matched ? 1 : 0);
      }
      const double ap = ap_101(tp_flags, gt_count[static_cast<size_t>(c)]);
      ap_mean += ap;
      ap_sum_per_thr[ti] += ap;
    }
    report.per_category_ap[static_cast<size_t>(c)] =
        ap_mean / static_cast<double>(iou_thresholds.size());
  }

  if (cats_with_gt > 0) {
    double total = 0;
    for (double v : report.per_category_ap)
      if (v >= 0) total += v;
    report.ap = total / cats_with_gt;
    if (static_cast<size_t>(thr50) < iou_thresholds.size())
      report.ap50 = ap_sum_per_thr[static_cast<size_t>(thr50)] / cats_with_gt;
    if (static_cast<size_t>(thr75) < iou_thresholds.size())
      report.ap75 = ap_sum_per_thr[static_cast<size_t>(thr75)] / cats_with_gt;
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_cat = nlohmann::json::array();
  for (size_t c = 0; c < per_category_ap.size(); ++c)
    per_cat.push_back({{"category", category_names[c]},
                       {"ap", per_category_ap[c]},
                       {"has_instances", per_category_ap[c] >= 0}});
  return {{"dataset", dataset},       {"ap", ap},
          {"ap50", ap50},             {"ap75", ap75},
          {"per_category", per_cat},  {"image_count", image_count},
          {"gt_count", gt_count}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset = j.value("dataset", "");
  r.ap = j.at("ap").get<double>();
  r.ap50 = j.at("ap50").get<double>();
  r.ap75 = j.at("ap75").get<double>();
  r.image_count = j.value("image_count", 0);
  r.gt_count = j.value("gt_count", 0);
  for (const auto& pc : j.value("per_category", nlohmann::json::array())) {
    r.category_names.push_back(pc.at("category").get<std::string>());
    r.per_category_ap.push_back(pc.at("ap").get<double>());
  }
  return r;
}

}  // namespace dethub::engine
