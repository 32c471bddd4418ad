// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include "dethub/core/autodiff.hpp"
#include "dethub/core/params.hpp"
#include "dethub/core/rng.hpp"

namespace dethub::queryhub {

// Multi-head attention projections, biasless. Used both for the hub
// cross-attention (queries onto a dataset embedding, no residual) and for
// the query self-interaction block.
struct AttentionWeights {
  ad::Var wq, wk, wv, wo;
  int heads = 8;
};

AttentionWeights make_attention(ParamStore& store, const std::string& prefix, int d_model,
                                int kv_dim, int heads, Rng& rng);

// out = Attn(q_in, kv_in): softmax((Q Wq)(K Wk)^T / sqrt(dh)) (V Wv) Wo
ad::Var multihead_attention(const AttentionWeights& w, const ad::Var& q_in,
                            const ad::Var& kv_in);

struct QueryHubConfig {
  int d_q = 64;       // query/channel width of the shared space
  int embed_dim = 64; // language embedding width
  int heads = 8;
  int ffn_dim = 256;
};

// Query adaptation on a dataset embedding (cross-attention, no residual)
// plus the self-interaction block (pre-norm residual attention + FFN).
class QueryHub {
 public:
  QueryHub(ParamStore& store, const std::string& prefix, QueryHubConfig cfg, Rng& rng);

  // adapted queries from cross-attention of queries onto the embedding
  ad::Var adapt(const ad::Var& queries, const ad::Var& embedding) const;
  // interactive queries from self-attention with residuals
  ad::Var interact(const ad::Var& adapted) const;

  const QueryHubConfig& config() const { return cfg_; }

 private:
  QueryHubConfig cfg_;
  AttentionWeights cross_;
  AttentionWeights self_;
  ad::Var ln1_g_, ln1_b_, ln2_g_, ln2_b_;
  ad::Var ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;
};

struct DynKernelConfig {
  int kernel_size = 3;
  int c_in = 64;
  int c_mid = 16;
  int c_out = 64;
  bool linear_mode = false;  // identity norm/activation between the convs

  void validate() const;
  int reduce_numel() const { return kernel_size * kernel_size * c_in * c_mid; }
  int expand_numel() const { return kernel_size * kernel_size * c_mid * c_out; }
  int flat_size() const { return reduce_numel() + expand_numel(); }
  int norm_groups() const { return c_mid % 8 == 0 ? 8 : 1; }
};

// Per-query kernel pair sliced out of the generator output.
struct DynamicKernel {
  ad::Var reduce;  // [k, k, c_in, c_mid]
  ad::Var expand;  // [k, k, c_mid, c_out]
};

// Shared linear layers mapping each query row independently to a flattened
// kernel pair; kernel i depends only on query row i.
class KernelGenerator {
 public:
  KernelGenerator(ParamStore& store, const std::string& prefix, int d_q, DynKernelConfig cfg,
                  Rng& rng, bool bias = true);

  // [N_q x d_q] -> [N_q x flat_size]
  ad::Var generate_flat(const ad::Var& q_star) const;
  DynamicKernel kernel_for_query(const ad::Var& flat, int query_index) const;

  const DynKernelConfig& config() const { return cfg_; }

 private:
  DynKernelConfig cfg_;
  ad::Var w_;
  ad::Var b_;  // null when biasless
};

// Affine parameters of the normalization between the two convolutions.
struct DyconvNorm {
  ad::Var gamma;
  ad::Var beta;
};

DyconvNorm make_dyconv_norm(ParamStore& store, const std::string& prefix, int c_mid);

// Bottlenecked per-query convolution: expand(act(norm(reduce * x))).
// In linear mode norm/activation are identity, so the op is exactly two
// stacked convolutions. `stage` names the call site in shape errors.
ad::Var dyconv(const ad::Var& x_hwc, const DynamicKernel& kernel, const DynKernelConfig& cfg,
               const DyconvNorm* norm, std::string_view stage);

}  // namespace dethub::queryhub
