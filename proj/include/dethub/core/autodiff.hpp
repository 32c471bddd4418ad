// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dethub/core/tensor.hpp"

namespace dethub::ad {

// Reverse-mode autodiff over Tensor values. A fresh graph is built every
// forward pass; persistent leaves (parameters) keep their gradient buffers
// across passes so an optimizer can consume them.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  Tensor& ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() {
    if (grad.same_shape(value))
      std::fill(grad.vec().begin(), grad.vec().end(), 0.0);
  }
  double scalar() const { return value[0]; }
};

// Graph construction can be switched off for inference; ops then skip
// parent tracking and backward closures.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(Tensor v);
Var leaf(Tensor v, bool requires_grad = true);

// Runs reverse accumulation from a scalar root. Parameter leaf gradients
// must be zeroed by the caller between steps.
void backward(const Var& root);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var emin(const Var& a, const Var& b);
Var emax(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var expv(const Var& a);
Var tanhv(const Var& a);
Var clamp(const Var& a, double lo, double hi);
// hard clip forward; backward passes `leak` times the gradient outside
// [lo, hi] so saturated values keep a recovery direction
Var clip_leaky(const Var& a, double lo, double hi, double leak);
Var reshape(const Var& a, std::vector<int> shape);
Var add_n(const std::vector<Var>& xs);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// ---- matrix ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_rowvec(const Var& mat, const Var& vec);  // vec broadcast over rows
Var softmax_rows(const Var& a);
Var slice_rows(const Var& a, int r0, int r1);
Var slice_cols(const Var& a, int c0, int c1);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var gather_rows(const Var& a, const std::vector<int>& idx);

// ---- normalization ----
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// x is [H, W, C]; channels split into `groups` contiguous groups
Var group_norm_hwc(const Var& x, int groups, const Var& gamma, const Var& beta,
                   double eps = 1e-5);

// ---- convolution / pooling ----
// x [H, W, C_in], kernel [k, k, C_in, C_out], odd k, zero same-padding;
// output [ceil(H/stride), ceil(W/stride), C_out]
Var conv2d(const Var& x, const Var& kernel, int stride = 1);

// Bilinear region pooling. box is a length-4 Var (cx, cy, w, h) in
// normalized image coordinates; output [out_size, out_size, C]. One sample
// per bin at the bin center. Differentiable in the feature map AND the box.
Var roi_pool_bilinear(const Var& fmap, const Var& box, int out_size);

// ---- losses / geometry ----
// Sum of elementwise binary cross-entropy over entries where mask != 0.
// probs are clamped to [eps, 1-eps]; gradient is exactly
// (-t/p + (1-t)/(1-p)) inside the clamp range and 0 outside it.
Var bce_sum(const Var& probs, const Tensor& targets, const Tensor& mask, double eps);

// [M, 4] (cx, cy, w, h) -> [M, 4] (x1, y1, x2, y2)
Var box_cxcywh_to_xyxy(const Var& b);

// pred, gt are [M, 4] xyxy; returns [M] per-pair generalized IoU
Var giou_pairwise(const Var& pred, const Var& gt);

// sum |a - b| over matched rows, a [M,4] Var, b [M,4] constant
Var l1_sum(const Var& a, const Tensor& b);

}  // namespace dethub::ad
