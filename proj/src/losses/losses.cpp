// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dethub/core/errors.hpp"

namespace dethub::losses {

double giou_xyxy(const double a[4], const double b[4]) {
  const double ix1 = std::max(a[0], b[0]), iy1 = std::max(a[1], b[1]);
  const double ix2 = std::min(a[2], b[2]), iy2 = std::min(a[3], b[3]);
  const double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  const double hx1 = std::min(a[0], b[0]), hy1 = std::min(a[1], b[1]);
  const double hx2 = std::max(a[2], b[2]), hy2 = std::max(a[3], b[3]);
  const double hull = (hx2 - hx1) * (hy2 - hy1);
  return inter / uni - (hull - uni) / hull;
}

Tensor pool_category_scores(const Tensor& token_scores,
                            const taxonomy::DetectionPrompt& prompt) {
  const int nq = token_scores.dim(0);
  const int L = static_cast<int>(prompt.span_map.size());
  Tensor out({nq, L});
  for (int c = 0; c < L; ++c) {
    const auto& span = prompt.span_map[static_cast<size_t>(c)];
    if (span.length() == 0) continue;  // truncated category: score 0
    const double inv = 1.0 / span.length();
    for (int q = 0; q < nq; ++q) {
      double s = 0;
      for (int j = span.begin; j < span.end; ++j) s += token_scores.at2(q, j);
      out.at2(q, c) = s * inv;
    }
  }
  return out;
}

ad::Var pool_category_scores_var(const ad::Var& token_scores,
                                 const taxonomy::DetectionPrompt& prompt) {
  const int nq = token_scores->value.dim(0);
  std::vector<ad::Var> cols;
  cols.reserve(prompt.span_map.size());
  for (const auto& span : prompt.span_map) {
    if (span.length() == 0) {
      cols.push_back(ad::constant(Tensor({nq, 1})));
      continue;
    }
    ad::Var block = ad::slice_cols(token_scores, span.begin, span.end);
    // row-mean via matmul with a column of 1/len
    Tensor ones({span.length(), 1});
    std::fill(ones.vec().begin(), ones.vec().end(), 1.0 / span.length());
    cols.push_back(ad::matmul(block, ad::constant(ones)));
  }
  return ad::concat_cols(cols);
}

CostMatrix matching_cost(const Tensor& category_scores, const Tensor& pred_boxes,
                         const Tensor& gt_boxes, const std::vector<int>& gt_labels,
                         const CostWeights& w) {
  const int nq = pred_boxes.dim(0);
  const int ng = gt_boxes.empty() ? 0 : gt_boxes.dim(0);
  if (ng != static_cast<int>(gt_labels.size()))
    throw ShapeError("matching_cost: gt box/label count mismatch");
  const bool with_cls = !category_scores.empty();

  CostMatrix cm;
  cm.n_queries = nq;
  cm.n_gt = ng;
  cm.costs = Tensor({nq, ng});
  cm.cls_part = Tensor({nq, ng});
  cm.l1_part = Tensor({nq, ng});
  cm.giou_part = Tensor({nq, ng});
  if (ng == 0) return cm;

  auto to_xyxy = [](const Tensor& b, int i, double out[4]) {
    const double cx = b.at2(i, 0), cy = b.at2(i, 1);
    const double bw = b.at2(i, 2), bh = b.at2(i, 3);
    out[0] = cx - bw / 2;
    out[1] = cy - bh / 2;
    out[2] = cx + bw / 2;
    out[3] = cy + bh / 2;
  };

  for (int q = 0; q < nq; ++q) {
    double pb[4];
    to_xyxy(pred_boxes, q, pb);
    for (int g = 0; g < ng; ++g) {
      double gb[4];
      to_xyxy(gt_boxes, g, gb);
      double cls = 0;
      if (with_cls) {
        const int label = gt_labels[static_cast<size_t>(g)];
        if (label < 0 || label >= category_scores.dim(1))
          throw ShapeError("matching_cost: gt label outside score columns");
        cls = 1.0 - category_scores.at2(q, label);
      }
      double l1 = 0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(pred_boxes.at2(q, k) - gt_boxes.at2(g, k));
      const double giou = giou_xyxy(pb, gb);
      const double cost = w.lambda_cls * cls + w.lambda_l1 * l1 + w.lambda_giou * (1.0 - giou);
      if (!std::isfinite(cost))
        throw NumericError("matching_cost: non-finite cost at query " + std::to_string(q) +
                           ", gt " + std::to_string(g));
      cm.cls_part.at2(q, g) = cls;
      cm.l1_part.at2(q, g) = l1;
      cm.giou_part.at2(q, g) = 1.0 - giou;
      cm.costs.at2(q, g) = cost;
    }
  }
  return cm;
}

Assignment hungarian_match(const CostMatrix& cm) {
  const int nq = cm.n_queries;
  const int ng = cm.n_gt;
  Assignment out;
  out.query_to_gt.assign(static_cast<size_t>(nq), -1);
  if (ng == 0) {
    for (int q = 0; q < nq; ++q) out.unmatched_queries.push_back(q);
    return out;
  }
  if (ng > nq) throw DataError("more objects than queries");

  // shortest augmenting path over rows = ground truths (1-indexed),
  // columns = queries (1-indexed); column 0 is the virtual source
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(ng) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(nq) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(nq) + 1, 0);  // query col -> gt row
  std::vector<int> way(static_cast<size_t>(nq) + 1, 0);

  for (int i = 1; i <= ng; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(nq) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(nq) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= nq; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cm.costs.at2(j - 1, i0 - 1) - u[static_cast<size_t>(i0)] -
                           v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= nq; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= nq; ++j) {
    if (match[static_cast<size_t>(j)] != 0) {
      const int q = j - 1;
      const int g = match[static_cast<size_t>(j)] - 1;
      out.query_to_gt[static_cast<size_t>(q)] = g;
      out.total_cost += cm.costs.at2(q, g);
    }
  }
  for (int q = 0; q < nq; ++q) {
    if (out.query_to_gt[static_cast<size_t>(q)] >= 0)
      out.pairs.emplace_back(q, out.query_to_gt[static_cast<size_t>(q)]);
    else
      out.unmatched_queries.push_back(q);
  }
  return out;
}

ad::Var alignment_loss(const ad::Var& scores, const Tensor& targets,
                       const Tensor& valid_token_mask, double clamp_eps) {
  if (scores->value.ndim() != 2 || !scores->value.same_shape(targets))
    throw ShapeError("alignment_loss: scores " + scores->value.shape_str() +
                     " vs targets shape mismatch");
  const int nq = scores->value.dim(0);
  const int tc = scores->value.dim(1);
  if (static_cast<int>(valid_token_mask.size()) != tc)
    throw ShapeError("alignment_loss: mask length vs token count");
  Tensor mask({nq, tc});
  for (int q = 0; q < nq; ++q)
    for (int j = 0; j < tc; ++j) mask.at2(q, j) = valid_token_mask[static_cast<size_t>(j)];
  // sum of per-token BCE over valid tokens, mean over queries
  return ad::scale(ad::bce_sum(scores, targets, mask, clamp_eps), 1.0 / nq);
}

BoxLossResult box_loss(const ad::Var& pred_boxes_cxcywh, const Tensor& gt_boxes_cxcywh,
                       const std::vector<int>& query_to_gt, const CostWeights& w) {
  std::vector<int> matched_q;
  std::vector<int> matched_g;
  for (size_t q = 0; q < query_to_gt.size(); ++q) {
    if (query_to_gt[q] >= 0) {
      matched_q.push_back(static_cast<int>(q));
      matched_g.push_back(query_to_gt[q]);
    }
  }
  BoxLossResult r;
  if (matched_q.empty()) {
    r.l1_term = ad::constant(Tensor::scalar(0.0));
    r.giou_term = ad::constant(Tensor::scalar(0.0));
    r.total = ad::constant(Tensor::scalar(0.0));
    return r;
  }
  const int m = static_cast<int>(matched_q.size());
  Tensor gts({m, 4});
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 4; ++k) gts.at2(i, k) = gt_boxes_cxcywh.at2(matched_g[static_cast<size_t>(i)], k);

  ad::Var pred = ad::gather_rows(pred_boxes_cxcywh, matched_q);
  ad::Var l1 = ad::scale(ad::l1_sum(pred, gts), 1.0 / m);
  ad::Var giou = ad::giou_pairwise(ad::box_cxcywh_to_xyxy(pred),
                                   ad::box_cxcywh_to_xyxy(ad::constant(gts)));
  // (1/m) sum (1 - giou)
  ad::Var giou_term = ad::scale(ad::sum_all(ad::add_scalar(ad::scale(giou, -1.0), 1.0)), 1.0 / m);
  r.l1_term = l1;
  r.giou_term = giou_term;
  r.total = ad::add(ad::scale(l1, w.lambda_l1), ad::scale(giou_term, w.lambda_giou));
  return r;
}

TotalLossResult total_loss(const std::vector<StageForLoss>& stages, const Tensor& gt_boxes,
                           const std::vector<int>& gt_labels,
                           const taxonomy::DetectionPrompt& prompt,
                           const Tensor& valid_token_mask, const CostWeights& w,
                           double clamp_eps,
                           const std::vector<Assignment>* fixed_assignments) {
  if (stages.empty()) throw ShapeError("total_loss: no stages");
  if (fixed_assignments && fixed_assignments->size() != stages.size())
    throw ShapeError("total_loss: fixed assignment count vs stages");

  TotalLossResult out;
  std::vector<ad::Var> terms;
  const int ng = gt_boxes.empty() ? 0 : gt_boxes.dim(0);

  for (size_t s = 0; s < stages.size(); ++s) {
    const StageForLoss& st = stages[s];
    const int nq = st.boxes->value.dim(0);

    Assignment assign;
    if (fixed_assignments) {
      assign = (*fixed_assignments)[s];
    } else if (ng > 0) {
      Tensor scores;
      if (st.token_scores)
        scores = pool_category_scores(st.token_scores->value, prompt);
      CostMatrix cm = matching_cost(scores, st.boxes->value, gt_boxes, gt_labels, w);
      assign = hungarian_match(cm);
    } else {
      assign.query_to_gt.assign(static_cast<size_t>(nq), -1);
      for (int q = 0; q < nq; ++q) assign.unmatched_queries.push_back(q);
    }

    if (st.token_scores) {
      Tensor targets = taxonomy::make_target_matrix(gt_labels, prompt, assign.query_to_gt, nq);
      ad::Var align = alignment_loss(st.token_scores, targets, valid_token_mask, clamp_eps);
      out.align_value += align->scalar();
      terms.push_back(align);
    }
    BoxLossResult bl = box_loss(st.boxes, gt_boxes, assign.query_to_gt, w);
    out.l1_value += bl.l1_term->scalar();
    out.giou_value += bl.giou_term->scalar();
    terms.push_back(bl.total);
    out.assignments.push_back(std::move(assign));
  }
  out.total = ad::add_n(terms);
  return out;
}

}  // namespace dethub::losses
