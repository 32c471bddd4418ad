// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/detector/detector.hpp"

#include <cmath>

#include "dethub/core/errors.hpp"
#include "dethub/losses/losses.hpp"

namespace dethub::det {

namespace {
Tensor init_linear(int fan_in, int fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  w.fill_normal(rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  return w;
}
int gn_groups_for(int channels) { return channels % 8 == 0 ? 8 : 1; }
}  // namespace

int DetectorConfig::c_mid() const {
  return std::max(1, static_cast<int>(std::lround(channels * bottleneck_ratio)));
}

void DetectorConfig::validate() const {
  if (num_queries < 1) throw ConfigError("query count must be positive");
  if (stages < 1) throw ConfigError("decoder needs at least one stage");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("dyconv kernel size must be odd and >= 1");
  if (d < heads || d % heads != 0) throw ConfigError("d must be a multiple of heads");
  if (c_mid() >= channels)
    throw ConfigError("bottleneck ratio leaves no reduction (c_mid >= channels)");
  if (pool_level < 0 || pool_level > 3) throw ConfigError("pool_level must be in [0, 3]");
  if (pool_size < 1) throw ConfigError("pool_size must be positive");
  if (backbone_width < 2) throw ConfigError("backbone width too small");
}

ad::Var align_scores(const ad::Var& class_features, const ad::Var& language_features,
                     const Tensor& valid_token_mask) {
  if (class_features->value.dim(1) != language_features->value.dim(1))
    throw ShapeError("align_scores: feature dimension " + class_features->value.shape_str() +
                     " vs language " + language_features->value.shape_str());
  const int nq = class_features->value.dim(0);
  const int tc = language_features->value.dim(0);
  if (static_cast<int>(valid_token_mask.size()) != tc)
    throw ShapeError("align_scores: mask length vs token count");
  ad::Var s = ad::sigmoid(ad::matmul(class_features, ad::transpose(language_features)));
  bool any_pad = false;
  for (int j = 0; j < tc; ++j) any_pad |= valid_token_mask[static_cast<size_t>(j)] == 0.0;
  if (!any_pad) return s;
  Tensor mask({nq, tc});
  for (int q = 0; q < nq; ++q)
    for (int j = 0; j < tc; ++j) mask.at2(q, j) = valid_token_mask[static_cast<size_t>(j)];
  return ad::mul(s, ad::constant(mask));
}

ad::Var refine_boxes(const ad::Var& boxes_cxcywh, const ad::Var& deltas, double delta_clamp,
                     double min_size, int* degenerate_count) {
  auto col = [](const ad::Var& v, int c) { return ad::slice_cols(v, c, c + 1); };
  // per-stage deltas are bounded softly (tanh) so the gradient never dies,
  // and the corner clips leak gradient when saturated; hard clamping here
  // creates absorbing states that collapse boxes at small scale
  auto soften = [&](const ad::Var& d) {
    return ad::scale(ad::tanhv(ad::scale(d, 1.0 / delta_clamp)), delta_clamp);
  };
  ad::Var cx =
      ad::add(col(boxes_cxcywh, 0), ad::mul(soften(col(deltas, 0)), col(boxes_cxcywh, 2)));
  ad::Var cy =
      ad::add(col(boxes_cxcywh, 1), ad::mul(soften(col(deltas, 1)), col(boxes_cxcywh, 3)));
  ad::Var w = ad::mul(col(boxes_cxcywh, 2), ad::expv(soften(col(deltas, 2))));
  ad::Var h = ad::mul(col(boxes_cxcywh, 3), ad::expv(soften(col(deltas, 3))));

  constexpr double kLeak = 0.1;
  ad::Var x1 = ad::clip_leaky(ad::sub(cx, ad::scale(w, 0.5)), 0.0, 1.0 - min_size, kLeak);
  ad::Var y1 = ad::clip_leaky(ad::sub(cy, ad::scale(h, 0.5)), 0.0, 1.0 - min_size, kLeak);
  ad::Var x2r = ad::clip_leaky(ad::add(cx, ad::scale(w, 0.5)), 0.0, 1.0, kLeak);
  ad::Var y2r = ad::clip_leaky(ad::add(cy, ad::scale(h, 0.5)), 0.0, 1.0, kLeak);
  if (degenerate_count) {
    for (int i = 0; i < x1->value.dim(0); ++i) {
      if (x2r->value.at2(i, 0) - x1->value.at2(i, 0) < min_size) ++*degenerate_count;
      if (y2r->value.at2(i, 0) - y1->value.at2(i, 0) < min_size) ++*degenerate_count;
    }
  }
  ad::Var x2 = ad::emax(x2r, ad::add_scalar(x1, min_size));
  ad::Var y2 = ad::emax(y2r, ad::add_scalar(y1, min_size));

  ad::Var ocx = ad::scale(ad::add(x1, x2), 0.5);
  ad::Var ocy = ad::scale(ad::add(y1, y2), 0.5);
  ad::Var ow = ad::sub(x2, x1);
  ad::Var oh = ad::sub(y2, y1);
  return ad::concat_cols({ocx, ocy, ow, oh});
}

Detector::Detector(ParamStore& store, DetectorConfig cfg, uint64_t init_seed)
    : cfg_(cfg),
      init_rng_(hash_combine(init_seed, 0x6465746563746f72ULL)),
      hub_(store, "hub", queryhub::QueryHubConfig{cfg.d, cfg.embed_dim, cfg.heads, cfg.ffn_dim},
           init_rng_) {
  cfg_.validate();

  queries_ = store.create("queries", init_linear(cfg_.num_queries, cfg_.d, init_rng_));
  Tensor props({cfg_.num_queries, 4});
  for (int q = 0; q < cfg_.num_queries; ++q)
    for (int k = 0; k < 4; ++k) props.at2(q, k) = cfg_.init_box[static_cast<size_t>(k)];
  proposal_params_ = store.create("proposal_boxes", std::move(props));

  // 4-stage backbone: stem + strided stages at 4, 8, 16, 32
  const int w0 = cfg_.backbone_width;
  const int widths[5] = {w0, w0, 2 * w0, 4 * w0, 4 * w0};
  int c_prev = 3;
  for (int i = 0; i < 5; ++i) {
    ConvBlock b;
    b.stride = 2;
    b.gn_groups = gn_groups_for(widths[i]);
    b.kernel = store.create("backbone.conv" + std::to_string(i),
                            [&] {
                              Tensor k({3, 3, c_prev, widths[i]});
                              k.fill_normal(init_rng_, 1.0 / std::sqrt(9.0 * c_prev));
                              return k;
                            }());
    b.gn_gamma = store.create("backbone.gn" + std::to_string(i) + ".gamma",
                              Tensor::full({widths[i]}, 1.0));
    b.gn_beta = store.create("backbone.gn" + std::to_string(i) + ".beta", Tensor({widths[i]}));
    backbone_.push_back(std::move(b));
    c_prev = widths[i];
  }
  for (int level = 0; level < 4; ++level) {
    ConvBlock lat;
    lat.stride = 1;
    lat.gn_groups = 0;  // plain projection
    lat.kernel = store.create("lateral.conv" + std::to_string(level),
                              [&] {
                                Tensor k({1, 1, widths[level + 1], cfg_.channels});
                                k.fill_normal(init_rng_,
                                              1.0 / std::sqrt(static_cast<double>(widths[level + 1])));
                                return k;
                              }());
    laterals_.push_back(std::move(lat));
  }

  decode_.push_back(make_stage(store, "rpn", /*with_class_head=*/false));
  for (int s = 0; s < cfg_.stages; ++s)
    decode_.push_back(make_stage(store, "decoder.stage" + std::to_string(s),
                                 /*with_class_head=*/true));
}

Detector::StageParams Detector::make_stage(ParamStore& store, const std::string& prefix,
                                           bool with_class_head) {
  queryhub::DynKernelConfig kcfg;
  kcfg.kernel_size = cfg_.kernel_size;
  kcfg.c_in = cfg_.channels;
  kcfg.c_mid = cfg_.c_mid();
  kcfg.c_out = cfg_.channels;
  kcfg.linear_mode = cfg_.dyconv_linear_mode;

  const int flat_dim = cfg_.pool_size * cfg_.pool_size * cfg_.channels;
  StageParams sp{
      queryhub::KernelGenerator(store, prefix + ".kernelgen", cfg_.d, kcfg, init_rng_),
      queryhub::make_dyconv_norm(store, prefix + ".dyconv", kcfg.c_mid),
      store.create(prefix + ".fc.w", init_linear(flat_dim, cfg_.d, init_rng_)),
      store.create(prefix + ".fc.b", Tensor({cfg_.d})),
      nullptr,
      nullptr,
      store.create(prefix + ".box.w", Tensor({cfg_.d, 4})),  // zero-init delta head
      store.create(prefix + ".box.b", Tensor({4})),
  };
  if (with_class_head) {
    sp.cls_w = store.create(prefix + ".cls.w", init_linear(cfg_.d, cfg_.d, init_rng_));
    sp.cls_b = store.create(prefix + ".cls.b", Tensor({cfg_.d}));
  }
  return sp;
}

ad::Var Detector::run_conv_block(const ConvBlock& b, const ad::Var& x) const {
  ad::Var y = ad::conv2d(x, b.kernel, b.stride);
  if (b.gn_groups == 0) return y;  // lateral projection
  return ad::relu(ad::group_norm_hwc(y, b.gn_groups, b.gn_gamma, b.gn_beta));
}

std::vector<ad::Var> Detector::extract_features(const ad::Var& image) const {
  if (image->value.ndim() != 3 || image->value.dim(2) != 3)
    throw ShapeError("extract_features: expected [H,W,3], got " + image->value.shape_str());
  if (image->value.dim(0) < 32 || image->value.dim(1) < 32)
    throw DataError("image too small for the feature pyramid (min 32x32)");
  std::vector<ad::Var> pyramid;
  ad::Var x = run_conv_block(backbone_[0], image);  // stride 2
  for (int i = 1; i < 5; ++i) {
    x = run_conv_block(backbone_[static_cast<size_t>(i)], x);  // strides 4, 8, 16, 32
    pyramid.push_back(run_conv_block(laterals_[static_cast<size_t>(i - 1)], x));
  }
  return pyramid;
}

StageResult Detector::run_stage(const StageParams& sp, const ad::Var& fmap,
                                const ad::Var& boxes, const ad::Var& stage_queries,
                                bool with_class_head, const ad::Var& language_features,
                                const Tensor& valid_token_mask, const std::string& stage_name,
                                int* degenerate_count) const {
  const int nq = cfg_.num_queries;
  ad::Var flat_kernels = sp.generator.generate_flat(stage_queries);
  std::vector<ad::Var> object_rows;
  object_rows.reserve(static_cast<size_t>(nq));
  const int flat_dim = cfg_.pool_size * cfg_.pool_size * cfg_.channels;
  for (int q = 0; q < nq; ++q) {
    ad::Var box_q = ad::reshape(ad::slice_rows(boxes, q, q + 1), {4});
    ad::Var pooled = ad::roi_pool_bilinear(fmap, box_q, cfg_.pool_size);
    auto kern = sp.generator.kernel_for_query(flat_kernels, q);
    ad::Var filtered = queryhub::dyconv(pooled, kern, sp.generator.config(), &sp.norm, stage_name);
    ad::Var obj = ad::relu(ad::add_rowvec(
        ad::matmul(ad::reshape(filtered, {1, flat_dim}), sp.fc_w), sp.fc_b));
    object_rows.push_back(obj);
  }
  ad::Var objects = ad::concat_rows(object_rows);
  ad::Var deltas = ad::add_rowvec(ad::matmul(objects, sp.box_w), sp.box_b);

  StageResult out;
  out.boxes = refine_boxes(boxes, deltas, cfg_.delta_clamp, cfg_.degenerate_eps,
                           degenerate_count);
  out.object_features = objects;
  if (with_class_head) {
    out.class_features = ad::add_rowvec(ad::matmul(objects, sp.cls_w), sp.cls_b);
    out.token_scores = align_scores(out.class_features, language_features, valid_token_mask);
  }
  return out;
}

ForwardResult Detector::forward(const ad::Var& image, const ad::Var& embedding,
                                const ad::Var& language_features,
                                const Tensor& valid_token_mask) const {
  ForwardResult r;
  r.pyramid = extract_features(image);
  const ad::Var& fmap = r.pyramid[static_cast<size_t>(cfg_.pool_level)];

  ad::Var q_star;
  if (cfg_.rpn_adaptation || cfg_.decoder_adaptation)
    q_star = hub_.interact(hub_.adapt(queries_, embedding));
  r.adapted_queries = q_star;
  const ad::Var q_rpn = cfg_.rpn_adaptation ? q_star : queries_;
  const ad::Var q_dec = cfg_.decoder_adaptation ? q_star : queries_;

  // initial proposals: clipped learnable boxes
  ad::Var zero_delta = ad::constant(Tensor({cfg_.num_queries, 4}));
  ad::Var boxes = refine_boxes(proposal_params_, zero_delta, cfg_.delta_clamp,
                               cfg_.degenerate_eps, &r.degenerate_clamped);

  r.rpn = run_stage(decode_[0], fmap, boxes, q_rpn, /*with_class_head=*/false,
                    language_features, valid_token_mask, "rpn", &r.degenerate_clamped);
  boxes = r.rpn.boxes;
  for (int s = 1; s <= cfg_.stages; ++s) {
    StageResult sr = run_stage(decode_[static_cast<size_t>(s)], fmap, boxes, q_dec,
                               /*with_class_head=*/true, language_features, valid_token_mask,
                               "decoder-stage-" + std::to_string(s - 1), &r.degenerate_clamped);
    boxes = sr.boxes;
    r.stages.push_back(std::move(sr));
  }
  return r;
}

DetectionOutput Detector::predict(const Tensor& image,
                                  const data::DatasetDescriptor& dataset) const {
  ad::NoGradGuard ng;
  if (dataset.embedding.embed_dim() != cfg_.embed_dim)
    throw ConfigError("dataset embedding width " +
                      std::to_string(dataset.embedding.embed_dim()) +
                      " does not match detector embed_dim " + std::to_string(cfg_.embed_dim));
  if (dataset.embedding.d() != cfg_.d)
    throw ConfigError("language feature dimension " + std::to_string(dataset.embedding.d()) +
                      " does not match detector d " + std::to_string(cfg_.d));
  ad::Var img = ad::constant(image);
  ad::Var e = ad::constant(dataset.embedding.e);
  ad::Var fe = ad::constant(dataset.embedding.language_features);
  ForwardResult fr = forward(img, e, fe, dataset.embedding.valid_mask);

  const StageResult& last = fr.stages.back();
  DetectionOutput out;
  out.source_dataset = dataset.name;
  out.degenerate_clamped = fr.degenerate_clamped;
  out.token_scores = last.token_scores->value;
  out.category_scores = losses::pool_category_scores(out.token_scores, dataset.prompt);

  const double W = image.dim(1), H = image.dim(0);
  const Tensor& b = last.boxes->value;
  out.boxes = Tensor({cfg_.num_queries, 4});
  for (int q = 0; q < cfg_.num_queries; ++q) {
    const double cx = b.at2(q, 0) * W, cy = b.at2(q, 1) * H;
    const double bw = b.at2(q, 2) * W, bh = b.at2(q, 3) * H;
    out.boxes.at2(q, 0) = cx - bw / 2;
    out.boxes.at2(q, 1) = cy - bh / 2;
    out.boxes.at2(q, 2) = cx + bw / 2;
    out.boxes.at2(q, 3) = cy + bh / 2;
  }
  return out;
}

}  // namespace dethub::det
