// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dethub/core/errors.hpp"
#include "dethub/queryhub/queryhub.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/reference_conv.hpp"

using namespace dethub;
using namespace dethub::queryhub;
namespace t = dethub::testing;

namespace {

Tensor identity_matrix(int n) {
  Tensor id({n, n});
  for (int i = 0; i < n; ++i) id.at2(i, i) = 1.0;
  return id;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  t.fill_normal(rng, scale);
  return t;
}

Tensor permute_rows(const Tensor& x, const std::vector<int>& perm) {
  Tensor out(x.shape());
  const int n = x.dim(1);
  for (size_t i = 0; i < perm.size(); ++i)
    for (int j = 0; j < n; ++j)
      out.at2(static_cast<int>(i), j) = x.at2(perm[i], j);
  return out;
}

}  // namespace

TEST_CASE("single-key cross attention with identity value/output paths") {
  // one token in the embedding: softmax over a single key is 1, so with
  // Wv = Wo = I every adapted row equals that token's value vector
  const int d = 8;
  ParamStore store;
  Rng rng(3);
  QueryHubConfig cfg;
  cfg.d_q = d;
  cfg.embed_dim = d;
  cfg.heads = 4;
  QueryHub hub(store, "hub", cfg, rng);
  store.get("hub.cross.wv")->value = identity_matrix(d);
  store.get("hub.cross.wo")->value = identity_matrix(d);

  Rng data_rng(5);
  Tensor e = random_tensor({1, d}, data_rng);
  Tensor q = random_tensor({6, d}, data_rng);
  ad::NoGradGuard ng;
  Tensor adapted = hub.adapt(ad::constant(q), ad::constant(e))->value;
  REQUIRE(adapted.dim(0) == 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(adapted.at2(i, j) == doctest::Approx(e.at2(0, j)).epsilon(1e-12));
}

TEST_CASE("adapt is row-equivariant in the queries") {
  ParamStore store;
  Rng rng(7);
  QueryHubConfig cfg;
  cfg.d_q = 16;
  cfg.embed_dim = 12;
  QueryHub hub(store, "hub", cfg, rng);
  Rng data_rng(8);
  Tensor q = random_tensor({5, 16}, data_rng);
  Tensor e = random_tensor({4, 12}, data_rng);
  std::vector<int> perm = {3, 0, 4, 1, 2};

  ad::NoGradGuard ng;
  Tensor a = hub.adapt(ad::constant(q), ad::constant(e))->value;
  Tensor b = hub.adapt(ad::constant(permute_rows(q, perm)), ad::constant(e))->value;
  for (size_t i = 0; i < perm.size(); ++i)
    for (int j = 0; j < 16; ++j)
      CHECK(b.at2(static_cast<int>(i), j) == doctest::Approx(a.at2(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("adapt distinguishes embeddings across 10 seeded weight sets") {
  Rng data_rng(11);
  Tensor q = random_tensor({4, 16}, data_rng);
  Tensor ea = random_tensor({3, 12}, data_rng);
  Tensor eb = random_tensor({3, 12}, data_rng);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore store;
    Rng rng(seed);
    QueryHubConfig cfg;
    cfg.d_q = 16;
    cfg.embed_dim = 12;
    QueryHub hub(store, "hub", cfg, rng);
    ad::NoGradGuard ng;
    Tensor a = hub.adapt(ad::constant(q), ad::constant(ea))->value;
    Tensor b = hub.adapt(ad::constant(q), ad::constant(eb))->value;
    double max_diff = 0;
    for (size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
    CHECK(max_diff > 1e-8);
  }
}

TEST_CASE("adapt rejects an empty embedding") {
  ParamStore store;
  Rng rng(1);
  QueryHubConfig cfg;
  cfg.d_q = 8;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  QueryHub hub(store, "hub", cfg, rng);
  Tensor q = Tensor::full({2, 8}, 0.5);
  Tensor e({0, 8});
  CHECK_THROWS_WITH_AS(hub.adapt(ad::constant(q), ad::constant(e)),
                       "empty dataset embedding", DataError);
}

TEST_CASE("interact with a single query is residual plus value path") {
  const int d = 8;
  ParamStore store;
  Rng rng(13);
  QueryHubConfig cfg;
  cfg.d_q = d;
  cfg.embed_dim = d;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  QueryHub hub(store, "hub", cfg, rng);
  // silence the feed-forward block so the attention sub-block is isolated
  store.get("hub.ffn.w2")->value = Tensor({16, d});
  store.get("hub.ffn.b2")->value = Tensor({d});

  Rng data_rng(14);
  Tensor q = random_tensor({1, d}, data_rng);
  ad::NoGradGuard ng;
  Tensor got = hub.interact(ad::constant(q))->value;

  // expected: q + LN(q) Wv Wo (single-key self attention has weight 1)
  ad::Var ln = ad::layer_norm_rows(ad::constant(q), store.get("hub.ln1.gamma"),
                                   store.get("hub.ln1.beta"));
  ad::Var vpath = ad::matmul(ad::matmul(ln, store.get("hub.self.wv")), store.get("hub.self.wo"));
  for (int j = 0; j < d; ++j)
    CHECK(got.at2(0, j) == doctest::Approx(q.at2(0, j) + vpath->value.at2(0, j)).epsilon(1e-12));
}

TEST_CASE("interact is permutation-equivariant and keeps the default shape") {
  ParamStore store;
  Rng rng(17);
  QueryHubConfig cfg;  // defaults: d_q 64, heads 8
  QueryHub hub(store, "hub", cfg, rng);
  Rng data_rng(18);
  Tensor q = random_tensor({300, 64}, data_rng);
  ad::NoGradGuard ng;
  Tensor out = hub.interact(ad::constant(q))->value;
  CHECK(out.dim(0) == 300);
  CHECK(out.dim(1) == 64);

  std::vector<int> perm(300);
  for (int i = 0; i < 300; ++i) perm[static_cast<size_t>(i)] = (i * 7 + 3) % 300;
  Tensor out_p = hub.interact(ad::constant(permute_rows(q, perm)))->value;
  for (int i = 0; i < 300; ++i)
    for (int j = 0; j < 64; ++j)
      CHECK(out_p.at2(i, j) == doctest::Approx(out.at2(perm[static_cast<size_t>(i)], j))
                                   .epsilon(1e-9));
}

TEST_CASE("kernel generator: flattened size arithmetic") {
  DynKernelConfig cfg;
  cfg.kernel_size = 3;
  cfg.c_in = 64;
  cfg.c_mid = 16;
  cfg.c_out = 64;
  // 3*3*64*16 + 3*3*16*64
  CHECK(cfg.flat_size() == 18432);
  CHECK(cfg.reduce_numel() == 9216);
}

TEST_CASE("kernel generator config validation") {
  DynKernelConfig bad;
  bad.kernel_size = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.kernel_size = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  DynKernelConfig wide;
  wide.kernel_size = 1;
  wide.c_in = 16;
  wide.c_mid = 16;  // not a bottleneck
  wide.c_out = 16;
  CHECK_THROWS_AS(wide.validate(), ConfigError);
}

TEST_CASE("kernel generator: zero rows, biasless -> zero kernels; rows independent") {
  ParamStore store;
  Rng rng(19);
  DynKernelConfig cfg;
  cfg.kernel_size = 1;
  cfg.c_in = 8;
  cfg.c_mid = 2;
  cfg.c_out = 8;
  KernelGenerator gen(store, "gen", 16, cfg, rng, /*bias=*/false);

  Rng data_rng(20);
  Tensor q = random_tensor({3, 16}, data_rng);
  for (int j = 0; j < 16; ++j) q.at2(1, j) = 0.0;  // zero row

  ad::NoGradGuard ng;
  ad::Var flat = gen.generate_flat(ad::constant(q));
  auto k1 = gen.kernel_for_query(flat, 1);
  for (double v : k1.reduce->value.vec()) CHECK(v == 0.0);
  for (double v : k1.expand->value.vec()) CHECK(v == 0.0);

  // perturb row 2; kernels of rows 0 and 1 must be bit-identical
  Tensor q2 = q;
  for (int j = 0; j < 16; ++j) q2.at2(2, j) += 1.0;
  ad::Var flat2 = gen.generate_flat(ad::constant(q2));
  for (int qi : {0, 1}) {
    auto a = gen.kernel_for_query(flat, qi);
    auto b = gen.kernel_for_query(flat2, qi);
    for (size_t i = 0; i < a.reduce->value.size(); ++i)
      CHECK(a.reduce->value[i] == b.reduce->value[i]);
    for (size_t i = 0; i < a.expand->value.size(); ++i)
      CHECK(a.expand->value[i] == b.expand->value[i]);
  }
}

TEST_CASE("dyconv: channel-identity kernels act as identity in linear mode") {
  // The bottleneck keeps c_mid < c_in, so "channel identity" means the
  // reduce kernel selects the first c_mid channels and the expand kernel
  // restores them; inputs living in those channels pass through unchanged.
  DynKernelConfig cfg;
  cfg.kernel_size = 1;
  cfg.c_in = 4;
  cfg.c_mid = 2;
  cfg.c_out = 4;
  cfg.linear_mode = true;
  Tensor reduce({1, 1, 4, 2});
  reduce.at4(0, 0, 0, 0) = 1.0;
  reduce.at4(0, 0, 1, 1) = 1.0;
  Tensor expand({1, 1, 2, 4});
  expand.at4(0, 0, 0, 0) = 1.0;
  expand.at4(0, 0, 1, 1) = 1.0;

  Rng rng(21);
  Tensor x({5, 5, 4});
  for (int y = 0; y < 5; ++y)
    for (int xx = 0; xx < 5; ++xx)
      for (int c = 0; c < 2; ++c) x.at3(y, xx, c) = rng.normal();

  DynamicKernel kern{ad::constant(reduce), ad::constant(expand)};
  ad::NoGradGuard ng;
  Tensor out = dyconv(ad::constant(x), kern, cfg, nullptr, "test")->value;
  REQUIRE(out.same_shape(x));
  for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("dyconv: zero reduce kernel gives a zero map (biasless)") {
  DynKernelConfig cfg;
  cfg.kernel_size = 3;
  cfg.c_in = 4;
  cfg.c_mid = 2;
  cfg.c_out = 4;
  cfg.linear_mode = true;
  Rng rng(22);
  Tensor x = random_tensor({4, 4, 4}, rng);
  Tensor expand = random_tensor({3, 3, 2, 4}, rng);
  DynamicKernel kern{ad::constant(Tensor({3, 3, 4, 2})), ad::constant(expand)};
  ad::NoGradGuard ng;
  Tensor out = dyconv(ad::constant(x), kern, cfg, nullptr, "test")->value;
  for (double v : out.vec()) CHECK(v == 0.0);
}

TEST_CASE("dyconv equals composed sliding-window reference in linear mode") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    DynKernelConfig cfg;
    cfg.kernel_size = 3;
    cfg.c_in = 4;
    cfg.c_mid = 2;
    cfg.c_out = 3;
    cfg.linear_mode = true;
    Tensor x = random_tensor({5, 5, 4}, rng);
    Tensor reduce = random_tensor({3, 3, 4, 2}, rng);
    Tensor expand = random_tensor({3, 3, 2, 3}, rng);
    DynamicKernel kern{ad::constant(reduce), ad::constant(expand)};
    ad::NoGradGuard ng;
    Tensor got = dyconv(ad::constant(x), kern, cfg, nullptr, "oracle")->value;
    Tensor want = t::reference_conv2d(t::reference_conv2d(x, reduce, 1), expand, 1);
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
  }
}

TEST_CASE("dyconv shape errors name the stage") {
  DynKernelConfig cfg;
  cfg.kernel_size = 1;
  cfg.c_in = 8;
  cfg.c_mid = 2;
  cfg.c_out = 8;
  cfg.linear_mode = true;
  DynamicKernel kern{ad::constant(Tensor({1, 1, 8, 2})), ad::constant(Tensor({1, 1, 2, 8}))};
  Tensor x({3, 3, 5});  // wrong channel count
  try {
    dyconv(ad::constant(x), kern, cfg, nullptr, "decoder-stage-2");
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("decoder-stage-2") != std::string::npos);
  }
}

TEST_CASE("dyconv gradients w.r.t. feature map and query row") {
  // chain: q_star -> generator -> per-query kernels -> dyconv -> scalar
  ParamStore store;
  Rng rng(29);
  DynKernelConfig cfg;
  cfg.kernel_size = 3;
  cfg.c_in = 4;
  cfg.c_mid = 2;
  cfg.c_out = 4;
  cfg.linear_mode = false;
  KernelGenerator gen(store, "gen", 12, cfg, rng);
  DyconvNorm norm = make_dyconv_norm(store, "gen", cfg.c_mid);

  Rng data_rng(31);
  Tensor x0 = random_tensor({5, 5, 4}, data_rng);
  Tensor q0 = random_tensor({2, 12}, data_rng);
  Tensor w = random_tensor({5, 5, 4}, data_rng);  // loss weighting

  Tensor x = x0, q = q0;
  auto eval = [&]() {
    ad::NoGradGuard ng;
    auto flat = gen.generate_flat(ad::constant(q));
    auto kern = gen.kernel_for_query(flat, 0);
    auto y = dyconv(ad::constant(x), kern, cfg, &norm, "fd");
    return ad::sum_all(ad::mul(y, ad::constant(w)))->scalar();
  };
  ad::Var xv = ad::leaf(x, true), qv = ad::leaf(q, true);
  auto flat = gen.generate_flat(qv);
  auto kern = gen.kernel_for_query(flat, 0);
  auto y = dyconv(xv, kern, cfg, &norm, "fd");
  ad::backward(ad::sum_all(ad::mul(y, ad::constant(w))));

  CHECK(t::check_gradient(eval, x, xv->grad, 1e-6).max_rel_err < 1e-4);
  CHECK(t::check_gradient(eval, q, qv->grad, 1e-6).max_rel_err < 1e-4);
}
