// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "dethub/core/autodiff.hpp"
#include "dethub/core/tensor.hpp"
#include "dethub/taxonomy/taxonomy.hpp"

namespace dethub::losses {

struct CostWeights {
  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
};

// Pairwise query-to-ground-truth costs with a per-component breakdown.
struct CostMatrix {
  Tensor costs;       // [N_q x N_gt]
  Tensor cls_part;    // same shape; raw (1 - score)
  Tensor l1_part;     // raw L1 distance
  Tensor giou_part;   // raw (1 - GIoU)
  int n_queries = 0;
  int n_gt = 0;
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query, gt), ascending query index
  std::vector<int> unmatched_queries;
  std::vector<int> query_to_gt;  // -1 for unmatched
  double total_cost = 0;
};

// scalar GIoU of two xyxy boxes (plain double route, shared with the matcher)
double giou_xyxy(const double a[4], const double b[4]);

// Mean per-category alignment scores pooled over sub-word spans.
// Truncated categories (empty span) pool to 0.
Tensor pool_category_scores(const Tensor& token_scores, const taxonomy::DetectionPrompt& prompt);
ad::Var pool_category_scores_var(const ad::Var& token_scores,
                                 const taxonomy::DetectionPrompt& prompt);

// cost[q][g] = l_cls*(1-score[q,label_g]) + l_l1*|b_q-b_g|_1 + l_giou*(1-GIoU).
// Boxes are (cx, cy, w, h) in the normalized image frame. Scores may be
// empty (shape [0]) for box-only matching; the class term is then zero.
CostMatrix matching_cost(const Tensor& category_scores, const Tensor& pred_boxes,
                         const Tensor& gt_boxes, const std::vector<int>& gt_labels,
                         const CostWeights& w);

// Minimum-cost assignment of every ground truth to a distinct query
// (shortest augmenting path with potentials). Requires N_gt <= N_q.
// Scanning order is fixed ascending, so ties resolve to the lowest
// (query, gt) indices and results are bit-deterministic.
Assignment hungarian_match(const CostMatrix& costs);

// Eq.-style region-word alignment loss: binary cross-entropy between the
// score matrix and the target matrix, summed over valid tokens and averaged
// over queries. clamp_eps keeps the loss finite at saturated scores.
ad::Var alignment_loss(const ad::Var& scores, const Tensor& targets,
                       const Tensor& valid_token_mask, double clamp_eps = 1e-7);

// l_l1 * L1 + l_giou * (1 - GIoU) over matched pairs, averaged over the
// match count. Zero when nothing is matched.
struct BoxLossResult {
  ad::Var total;
  ad::Var l1_term;
  ad::Var giou_term;
};
BoxLossResult box_loss(const ad::Var& pred_boxes_cxcywh, const Tensor& gt_boxes_cxcywh,
                       const std::vector<int>& query_to_gt, const CostWeights& w);

// One decoder stage (or the RPN) as seen by the training objective.
// token_scores is null for the RPN: its proposals receive box supervision
// only.
struct StageForLoss {
  ad::Var boxes;         // [N_q x 4] cxcywh normalized
  ad::Var token_scores;  // [N_q x T] in (0,1), or null
};

struct TotalLossResult {
  ad::Var total;
  double align_value = 0;
  double l1_value = 0;
  double giou_value = 0;
  std::vector<Assignment> assignments;  // one per stage, matching input order
};

// Deep supervision: every stage is matched and scored independently and the
// terms are summed. When `fixed_assignments` is given (finite-difference
// tests) matching is skipped and the provided assignments are used.
TotalLossResult total_loss(const std::vector<StageForLoss>& stages, const Tensor& gt_boxes,
                           const std::vector<int>& gt_labels,
                           const taxonomy::DetectionPrompt& prompt,
                           const Tensor& valid_token_mask, const CostWeights& w,
                           double clamp_eps = 1e-7,
                           const std::vector<Assignment>* fixed_assignments = nullptr);

}  // namespace dethub::losses
