// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "dethub/core/autodiff.hpp"
#include "dethub/core/params.hpp"
#include "dethub/data/descriptor.hpp"
#include "dethub/queryhub/queryhub.hpp"

namespace dethub::det {

struct DetectorConfig {
  int num_queries = 300;
  int stages = 6;
  int kernel_size = 3;
  double bottleneck_ratio = 0.25;
  int d = 64;             // shared visual-language dimension
  int channels = 64;      // pyramid channels after lateral projection
  int backbone_width = 32;
  int embed_dim = 64;     // language embedding width entering the hub
  int heads = 8;
  int ffn_dim = 256;
  int pool_size = 7;
  int pool_level = 1;     // pyramid level for region pooling (0 = stride 4)
  bool dyconv_linear_mode = false;
  bool rpn_adaptation = true;
  bool decoder_adaptation = true;
  bool backbone_bias = false;
  std::array<double, 4> init_box = {0.5, 0.5, 1.0, 1.0};
  double degenerate_eps = 1e-4;
  double delta_clamp = 2.0;  // soft (tanh) bound on per-stage box deltas

  int c_mid() const;
  void validate() const;
};

// One decoder stage (or the RPN, whose token_scores stays null).
struct StageResult {
  ad::Var boxes;           // [N_q x 4] cxcywh, normalized, clipped
  ad::Var object_features; // [N_q x d]
  ad::Var class_features;  // [N_q x d], null for the RPN
  ad::Var token_scores;    // [N_q x T] in [0,1], pads masked to 0; null for RPN
};

struct ForwardResult {
  std::vector<ad::Var> pyramid;      // strides 4, 8, 16, 32
  ad::Var adapted_queries;           // null when adaptation is off everywhere
  StageResult rpn;
  std::vector<StageResult> stages;
  int degenerate_clamped = 0;
};

// Final-stage outputs in plain tensors, boxes in absolute pixels.
struct DetectionOutput {
  Tensor boxes;            // [N_q x 4] (x1, y1, x2, y2) pixels
  Tensor token_scores;     // [N_q x token_count]
  Tensor category_scores;  // [N_q x category_count], span means
  std::string source_dataset;
  int degenerate_clamped = 0;
};

// sigmoid(class_features . language_features^T) with pad columns forced to 0
ad::Var align_scores(const ad::Var& class_features, const ad::Var& language_features,
                     const Tensor& valid_token_mask);

// box + scale-invariant size delta, then clipping to the unit square with a
// minimum size; increments *degenerate_count for every clamped side
ad::Var refine_boxes(const ad::Var& boxes_cxcywh, const ad::Var& deltas, double delta_clamp,
                     double min_size, int* degenerate_count);

class Detector {
 public:
  Detector(ParamStore& store, DetectorConfig cfg, uint64_t init_seed);

  // image is [H, W, 3], already normalized; H, W >= 32
  std::vector<ad::Var> extract_features(const ad::Var& image) const;

  // full pass conditioned on one dataset embedding
  ForwardResult forward(const ad::Var& image, const ad::Var& embedding,
                        const ad::Var& language_features, const Tensor& valid_token_mask) const;

  // inference: final-stage scores pooled over category spans
  DetectionOutput predict(const Tensor& image, const data::DatasetDescriptor& dataset) const;

  const DetectorConfig& config() const { return cfg_; }

 private:
  struct ConvBlock {
    ad::Var kernel;
    ad::Var bias;  // null when biasless
    ad::Var gn_gamma, gn_beta;
    int stride = 2;
    int gn_groups = 1;
  };
  struct StageParams {
    queryhub::KernelGenerator generator;
    queryhub::DyconvNorm norm;
    ad::Var fc_w, fc_b;    // flattened pooled features -> d
    ad::Var cls_w, cls_b;  // object features -> class features
    ad::Var box_w, box_b;  // object features -> box delta (zero-init)
  };

  ad::Var run_conv_block(const ConvBlock& b, const ad::Var& x) const;
  StageParams make_stage(ParamStore& store, const std::string& prefix, bool with_class_head);
  // pooled-region decode shared by the RPN and decoder stages
  StageResult run_stage(const StageParams& sp, const ad::Var& fmap, const ad::Var& boxes,
                        const ad::Var& stage_queries, bool with_class_head,
                        const ad::Var& language_features, const Tensor& valid_token_mask,
                        const std::string& stage_name, int* degenerate_count) const;

  DetectorConfig cfg_;
  Rng init_rng_;  // consumed during construction only; order of draws is fixed
  ad::Var queries_;
  ad::Var proposal_params_;  // [N_q x 4] learnable initial boxes
  std::vector<ConvBlock> backbone_;
  std::vector<ConvBlock> laterals_;
  queryhub::QueryHub hub_;
  std::vector<StageParams> decode_;  // [0] is the RPN, [1..stages] the decoder
};

}  // namespace dethub::det
