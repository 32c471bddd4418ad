// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/queryhub/queryhub.hpp"

#include <cmath>

#include "dethub/core/errors.hpp"

namespace dethub::queryhub {

namespace {
Tensor init_linear(int fan_in, int fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  w.fill_normal(rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  return w;
}
}  // namespace

AttentionWeights make_attention(ParamStore& store, const std::string& prefix, int d_model,
                                int kv_dim, int heads, Rng& rng) {
  if (d_model % heads != 0)
    throw ConfigError("attention: heads must divide model width (" + std::to_string(d_model) +
                      " / " + std::to_string(heads) + ")");
  AttentionWeights w;
  w.heads = heads;
  w.wq = store.create(prefix + ".wq", init_linear(d_model, d_model, rng));
  w.wk = store.create(prefix + ".wk", init_linear(kv_dim, d_model, rng));
  w.wv = store.create(prefix + ".wv", init_linear(kv_dim, d_model, rng));
  w.wo = store.create(prefix + ".wo", init_linear(d_model, d_model, rng));
  return w;
}

ad::Var multihead_attention(const AttentionWeights& w, const ad::Var& q_in,
                            const ad::Var& kv_in) {
  if (kv_in->value.ndim() != 2 || kv_in->value.dim(0) == 0)
    throw DataError("empty dataset embedding");
  const int d_model = w.wq->value.dim(1);
  const int dh = d_model / w.heads;
  ad::Var q = ad::matmul(q_in, w.wq);
  ad::Var k = ad::matmul(kv_in, w.wk);
  ad::Var v = ad::matmul(kv_in, w.wv);
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<size_t>(w.heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < w.heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    ad::Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    ad::Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    ad::Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    heads.push_back(ad::matmul(ad::softmax_rows(logits), vh));
  }
  return ad::matmul(ad::concat_cols(heads), w.wo);
}

QueryHub::QueryHub(ParamStore& store, const std::string& prefix, QueryHubConfig cfg, Rng& rng)
    : cfg_(cfg),
      cross_(make_attention(store, prefix + ".cross", cfg.d_q, cfg.embed_dim, cfg.heads, rng)),
      self_(make_attention(store, prefix + ".self", cfg.d_q, cfg.d_q, cfg.heads, rng)) {
  ln1_g_ = store.create(prefix + ".ln1.gamma", Tensor::full({cfg.d_q}, 1.0));
  ln1_b_ = store.create(prefix + ".ln1.beta", Tensor({cfg.d_q}));
  ln2_g_ = store.create(prefix + ".ln2.gamma", Tensor::full({cfg.d_q}, 1.0));
  ln2_b_ = store.create(prefix + ".ln2.beta", Tensor({cfg.d_q}));
  ffn_w1_ = store.create(prefix + ".ffn.w1", init_linear(cfg.d_q, cfg.ffn_dim, rng));
  ffn_b1_ = store.create(prefix + ".ffn.b1", Tensor({cfg.ffn_dim}));
  ffn_w2_ = store.create(prefix + ".ffn.w2", init_linear(cfg.ffn_dim, cfg.d_q, rng));
  ffn_b2_ = store.create(prefix + ".ffn.b2", Tensor({cfg.d_q}));
}

ad::Var QueryHub::adapt(const ad::Var& queries, const ad::Var& embedding) const {
  return multihead_attention(cross_, queries, embedding);
}

ad::Var QueryHub::interact(const ad::Var& adapted) const {
  // pre-norm residual blocks: attention then feed-forward
  ad::Var x = adapted;
  ad::Var normed = ad::layer_norm_rows(x, ln1_g_, ln1_b_);
  x = ad::add(x, multihead_attention(self_, normed, normed));
  ad::Var normed2 = ad::layer_norm_rows(x, ln2_g_, ln2_b_);
  ad::Var hidden = ad::relu(ad::add_rowvec(ad::matmul(normed2, ffn_w1_), ffn_b1_));
  return ad::add(x, ad::add_rowvec(ad::matmul(hidden, ffn_w2_), ffn_b2_));
}

void DynKernelConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("dyconv kernel size must be odd and >= 1, got " +
                      std::to_string(kernel_size));
  if (c_mid < 1) throw ConfigError("dyconv bottleneck channels must be positive");
  if (c_mid >= std::min(c_in, c_out))
    throw ConfigError("dyconv bottleneck must be narrower than in/out channels (c_mid=" +
                      std::to_string(c_mid) + ", c_in=" + std::to_string(c_in) +
                      ", c_out=" + std::to_string(c_out) + ")");
}

KernelGenerator::KernelGenerator(ParamStore& store, const std::string& prefix, int d_q,
                                 DynKernelConfig cfg, Rng& rng, bool bias)
    : cfg_(cfg) {
  cfg_.validate();
  w_ = store.create(prefix + ".w", init_linear(d_q, cfg_.flat_size(), rng));
  if (bias) b_ = store.create(prefix + ".b", Tensor({cfg_.flat_size()}));
}

ad::Var KernelGenerator::generate_flat(const ad::Var& q_star) const {
  ad::Var flat = ad::matmul(q_star, w_);
  if (b_) flat = ad::add_rowvec(flat, b_);
  return flat;
}

DynamicKernel KernelGenerator::kernel_for_query(const ad::Var& flat, int query_index) const {
  const int k = cfg_.kernel_size;
  ad::Var row = ad::slice_rows(flat, query_index, query_index + 1);
  DynamicKernel out;
  out.reduce = ad::reshape(ad::slice_cols(row, 0, cfg_.reduce_numel()),
                           {k, k, cfg_.c_in, cfg_.c_mid});
  out.expand = ad::reshape(ad::slice_cols(row, cfg_.reduce_numel(), cfg_.flat_size()),
                           {k, k, cfg_.c_mid, cfg_.c_out});
  return out;
}

DyconvNorm make_dyconv_norm(ParamStore& store, const std::string& prefix, int c_mid) {
  DyconvNorm n;
  n.gamma = store.create(prefix + ".norm.gamma", Tensor::full({c_mid}, 1.0));
  n.beta = store.create(prefix + ".norm.beta", Tensor({c_mid}));
  return n;
}

ad::Var dyconv(const ad::Var& x_hwc, const DynamicKernel& kernel, const DynKernelConfig& cfg,
               const DyconvNorm* norm, std::string_view stage) {
  if (x_hwc->value.ndim() != 3 || x_hwc->value.dim(2) != cfg.c_in)
    throw ShapeError("dyconv[" + std::string(stage) + "]: input " + x_hwc->value.shape_str() +
                     " does not carry " + std::to_string(cfg.c_in) + " channels");
  ad::Var mid = ad::conv2d(x_hwc, kernel.reduce, 1);
  if (!cfg.linear_mode) {
    if (norm == nullptr)
      throw ConfigError("dyconv[" + std::string(stage) + "]: norm parameters required");
    mid = ad::relu(ad::group_norm_hwc(mid, cfg.norm_groups(), norm->gamma, norm->beta));
  }
  return ad::conv2d(mid, kernel.expand, 1);
}

}  // namespace dethub::queryhub
