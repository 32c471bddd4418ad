// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dethub/core/errors.hpp"
#include "dethub/losses/losses.hpp"
#include "oracles/assignment_bruteforce.hpp"
#include "oracles/finite_diff.hpp"

using namespace dethub;
using namespace dethub::losses;
namespace t = dethub::testing;

namespace {

taxonomy::DetectionPrompt two_cat_prompt() {
  taxonomy::CategoryVocabulary v;
  v.dataset_name = "loss-test";
  v.categories = {"person", "cat"};
  return taxonomy::tokenize_prompt(v, 64);
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  t.fill_normal(rng, scale);
  return t;
}

// independent reimplementation of the pairwise cost used as a test oracle
double reference_cost(const Tensor& scores, const Tensor& pb, const Tensor& gb, int q, int g,
                      int label, const CostWeights& w) {
  double l1 = 0;
  for (int k = 0; k < 4; ++k) l1 += std::abs(pb.at2(q, k) - gb.at2(g, k));
  auto xy = [](const Tensor& b, int i, int k) {
    const double c = b.at2(i, k % 2), s = b.at2(i, 2 + k % 2);
    return k < 2 ? c - s / 2 : c + s / 2;
  };
  double A[4] = {xy(pb, q, 0), xy(pb, q, 1), xy(pb, q, 2), xy(pb, q, 3)};
  double B[4] = {xy(gb, g, 0), xy(gb, g, 1), xy(gb, g, 2), xy(gb, g, 3)};
  const double iw = std::max(0.0, std::min(A[2], B[2]) - std::max(A[0], B[0]));
  const double ih = std::max(0.0, std::min(A[3], B[3]) - std::max(A[1], B[1]));
  const double inter = iw * ih;
  const double uni = (A[2] - A[0]) * (A[3] - A[1]) + (B[2] - B[0]) * (B[3] - B[1]) - inter;
  const double hull =
      (std::max(A[2], B[2]) - std::min(A[0], B[0])) * (std::max(A[3], B[3]) - std::min(A[1], B[1]));
  const double giou = inter / uni - (hull - uni) / hull;
  return w.lambda_cls * (1.0 - scores.at2(q, label)) + w.lambda_l1 * l1 +
         w.lambda_giou * (1.0 - giou);
}

}  // namespace

TEST_CASE("matching_cost: perfect pair costs zero") {
  Tensor scores({1, 1}, {1.0});
  Tensor box({1, 4}, {0.5, 0.5, 0.2, 0.2});
  CostWeights w;
  auto cm = matching_cost(scores, box, box, {0}, w);
  CHECK(cm.costs.at2(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("matching_cost: disjoint boxes put the giou term in (1, 2]") {
  Tensor scores({1, 1}, {1.0});
  Tensor pb({1, 4}, {0.15, 0.5, 0.1, 0.1});
  Tensor gb({1, 4}, {0.85, 0.5, 0.1, 0.1});
  CostWeights w;
  auto cm = matching_cost(scores, pb, gb, {0}, w);
  CHECK(cm.giou_part.at2(0, 0) > 1.0);
  CHECK(cm.giou_part.at2(0, 0) <= 2.0);
}

TEST_CASE("matching_cost: random 4x3 equals the reference computation") {
  Rng rng(101);
  Tensor scores({4, 3});
  scores.fill_uniform(rng, 0.0, 1.0);
  Tensor pb({4, 4}), gb({3, 4});
  for (int i = 0; i < 4; ++i) {
    pb.at2(i, 0) = rng.uniform(0.2, 0.8);
    pb.at2(i, 1) = rng.uniform(0.2, 0.8);
    pb.at2(i, 2) = rng.uniform(0.05, 0.3);
    pb.at2(i, 3) = rng.uniform(0.05, 0.3);
  }
  for (int i = 0; i < 3; ++i) {
    gb.at2(i, 0) = rng.uniform(0.2, 0.8);
    gb.at2(i, 1) = rng.uniform(0.2, 0.8);
    gb.at2(i, 2) = rng.uniform(0.05, 0.3);
    gb.at2(i, 3) = rng.uniform(0.05, 0.3);
  }
  std::vector<int> labels = {2, 0, 1};
  CostWeights w;
  auto cm = matching_cost(scores, pb, gb, labels, w);
  for (int q = 0; q < 4; ++q)
    for (int g = 0; g < 3; ++g)
      CHECK(cm.costs.at2(q, g) ==
            doctest::Approx(reference_cost(scores, pb, gb, q, g, labels[g], w)).epsilon(1e-12));
}

TEST_CASE("matching_cost: non-finite input reports indices") {
  Tensor scores({2, 1}, {0.5, 0.5});
  Tensor pb({2, 4}, {0.5, 0.5, 0.2, 0.2, std::nan(""), 0.5, 0.2, 0.2});
  Tensor gb({1, 4}, {0.5, 0.5, 0.2, 0.2});
  CostWeights w;
  try {
    matching_cost(scores, pb, gb, {0}, w);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("query 1") != std::string::npos);
    CHECK(std::string(e.what()).find("gt 0") != std::string::npos);
  }
}

TEST_CASE("hungarian: 1x1 and the 2x2 example") {
  CostMatrix one;
  one.n_queries = 1;
  one.n_gt = 1;
  one.costs = Tensor({1, 1}, {3.0});
  auto a = hungarian_match(one);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0] == std::pair<int, int>(0, 0));

  // [[1,2],[2,1]] -> (0,0),(1,1), total 2; brute force over both
  // permutations gives min(1+1, 2+2) = 2
  CostMatrix two;
  two.n_queries = 2;
  two.n_gt = 2;
  two.costs = Tensor({2, 2}, {1.0, 2.0, 2.0, 1.0});
  auto b = hungarian_match(two);
  CHECK(b.total_cost == doctest::Approx(2.0));
  REQUIRE(b.pairs.size() == 2);
  CHECK(b.pairs[0] == std::pair<int, int>(0, 0));
  CHECK(b.pairs[1] == std::pair<int, int>(1, 1));
  CHECK(b.unmatched_queries.empty());
}

TEST_CASE("hungarian equals brute force on random matrices up to 6x6") {
  Rng rng(202);
  for (int trial = 0; trial < 60; ++trial) {
    const int nq = rng.uniform_int(1, 6);
    const int ng = rng.uniform_int(1, nq);
    CostMatrix cm;
    cm.n_queries = nq;
    cm.n_gt = ng;
    cm.costs = Tensor({nq, ng});
    const bool integers = trial % 2 == 0;
    for (auto& v : cm.costs.vec())
      v = integers ? static_cast<double>(rng.uniform_int(0, 9)) : rng.uniform(-2.0, 5.0);
    auto got = hungarian_match(cm);
    const double want = t::brute_force_assignment_cost(cm.costs);
    CHECK(got.total_cost == doctest::Approx(want).epsilon(1e-9));
    // every gt matched exactly once
    std::vector<int> seen(static_cast<size_t>(ng), 0);
    for (auto [q, g] : got.pairs) seen[static_cast<size_t>(g)]++;
    for (int g = 0; g < ng; ++g) CHECK(seen[static_cast<size_t>(g)] == 1);
  }
}

TEST_CASE("hungarian: more objects than queries errors; scaling keeps assignment") {
  CostMatrix cm;
  cm.n_queries = 1;
  cm.n_gt = 2;
  cm.costs = Tensor({1, 2}, {1.0, 2.0});
  CHECK_THROWS_WITH_AS(hungarian_match(cm), "more objects than queries", DataError);

  Rng rng(203);
  for (int trial = 0; trial < 20; ++trial) {
    CostMatrix a;
    a.n_queries = 5;
    a.n_gt = 3;
    a.costs = Tensor({5, 3});
    for (auto& v : a.costs.vec()) v = rng.uniform(0.0, 1.0);
    CostMatrix b = a;
    for (auto& v : b.costs.vec()) v *= 7.25;
    auto ra = hungarian_match(a);
    auto rb = hungarian_match(b);
    CHECK(ra.query_to_gt == rb.query_to_gt);
    CHECK(rb.total_cost == doctest::Approx(ra.total_cost * 7.25));
  }
}

TEST_CASE("hungarian determinism") {
  Rng rng(204);
  CostMatrix cm;
  cm.n_queries = 6;
  cm.n_gt = 4;
  cm.costs = Tensor({6, 4});
  for (auto& v : cm.costs.vec()) v = rng.uniform(0.0, 2.0);
  auto a = hungarian_match(cm);
  auto b = hungarian_match(cm);
  CHECK(a.query_to_gt == b.query_to_gt);
  CHECK(a.total_cost == b.total_cost);
}

TEST_CASE("alignment_loss: uniform 0.5 scores give ln(2) per valid token") {
  const int nq = 3, tc = 5;
  ad::Var s = ad::constant(Tensor::full({nq, tc}, 0.5));
  Tensor targets({nq, tc});
  targets.at2(0, 1) = 1.0;  // targets do not matter at p = 0.5
  Tensor mask = Tensor::full({tc}, 1.0);
  auto loss = alignment_loss(s, targets, mask);
  CHECK(loss->scalar() == doctest::Approx(tc * std::log(2.0)).epsilon(1e-12));

  // with pads masked out only valid tokens count
  Tensor mask2 = mask;
  mask2[4] = 0.0;
  auto loss2 = alignment_loss(s, targets, mask2);
  CHECK(loss2->scalar() == doctest::Approx(4 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("alignment_loss: perfect prediction tends to zero and is the minimum") {
  Tensor targets({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor mask = Tensor::full({3}, 1.0);
  Tensor close({2, 3});
  for (size_t i = 0; i < close.size(); ++i)
    close[i] = targets[i] > 0.5 ? 1.0 - 1e-9 : 1e-9;
  auto loss = alignment_loss(ad::constant(close), targets, mask);
  CHECK(loss->scalar() >= 0.0);
  CHECK(loss->scalar() < 1e-5);

  // any other score matrix gives a strictly larger loss
  Rng rng(205);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor other({2, 3});
    other.fill_uniform(rng, 0.05, 0.95);
    auto l = alignment_loss(ad::constant(other), targets, mask);
    CHECK(l->scalar() > loss->scalar());
  }
}

TEST_CASE("alignment_loss: random 2x4 equals scalar hand computation") {
  Rng rng(206);
  Tensor s({2, 4});
  s.fill_uniform(rng, 0.05, 0.95);
  Tensor targets({2, 4}, {1, 0, 0, 1, 0, 0, 1, 0});
  Tensor mask({4}, {1, 1, 1, 0});
  double want = 0;
  for (int q = 0; q < 2; ++q)
    for (int j = 0; j < 3; ++j) {
      const double p = s.at2(q, j), t0 = targets.at2(q, j);
      want += -(t0 * std::log(p) + (1 - t0) * std::log(1 - p));
    }
  want /= 2;
  auto loss = alignment_loss(ad::constant(s), targets, mask);
  CHECK(loss->scalar() == doctest::Approx(want).epsilon(1e-12));

  Tensor bad_mask({3}, {1, 1, 1});
  CHECK_THROWS_AS(alignment_loss(ad::constant(s), targets, bad_mask), ShapeError);
  Tensor bad_targets({2, 3});
  CHECK_THROWS_AS(alignment_loss(ad::constant(s), bad_targets, mask), ShapeError);
}

TEST_CASE("alignment gradient w.r.t. logits equals (S - T)/N_q") {
  Rng rng(207);
  const int nq = 3, tc = 6;
  Tensor z0 = random_tensor({nq, tc}, rng, 1.5);
  Tensor targets({nq, tc});
  for (size_t i = 0; i < targets.size(); ++i) targets[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  Tensor mask({tc}, {1, 1, 1, 1, 1, 0});

  ad::Var z = ad::leaf(z0, true);
  ad::Var s = ad::sigmoid(z);
  ad::Var loss = alignment_loss(s, targets, mask);
  ad::backward(loss);

  for (int q = 0; q < nq; ++q)
    for (int j = 0; j < tc; ++j) {
      const double expected =
          mask[static_cast<size_t>(j)] == 0.0 ? 0.0 : (s->value.at2(q, j) - targets.at2(q, j)) / nq;
      const double got = z->grad.at2(q, j);
      const double denom = std::max({std::abs(expected), std::abs(got), 1e-12});
      CHECK(std::abs(got - expected) / denom < 1e-6);
    }

  // and against central finite differences
  Tensor zf = z0;
  auto eval = [&]() {
    ad::NoGradGuard ng;
    return alignment_loss(ad::sigmoid(ad::constant(zf)), targets, mask)->scalar();
  };
  CHECK(t::check_gradient(eval, zf, z->grad, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("box_loss: identical boxes cost zero; giou of identical boxes is 1") {
  Tensor boxes({2, 4}, {0.4, 0.4, 0.2, 0.3, 0.6, 0.6, 0.25, 0.2});
  CostWeights w;
  auto r = box_loss(ad::constant(boxes), boxes, {0, 1}, w);
  CHECK(r.total->scalar() == doctest::Approx(0.0));

  double b[4] = {0.1, 0.2, 0.5, 0.9};
  CHECK(giou_xyxy(b, b) == doctest::Approx(1.0));
}

TEST_CASE("box_loss: random pair matches the composed reference") {
  Rng rng(208);
  Tensor pred({1, 4}, {0.45, 0.52, 0.3, 0.24});
  Tensor gt({1, 4}, {0.5, 0.5, 0.2, 0.2});
  CostWeights w;
  auto r = box_loss(ad::constant(pred), gt, {0}, w);
  double l1 = 0;
  for (int k = 0; k < 4; ++k) l1 += std::abs(pred.at2(0, k) - gt.at2(0, k));
  double A[4] = {0.45 - 0.15, 0.52 - 0.12, 0.45 + 0.15, 0.52 + 0.12};
  double B[4] = {0.4, 0.4, 0.6, 0.6};
  const double want = w.lambda_l1 * l1 + w.lambda_giou * (1.0 - giou_xyxy(A, B));
  CHECK(r.total->scalar() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total_loss: empty image, single stage, and two-stage sums") {
  auto prompt = two_cat_prompt();
  Tensor mask = prompt.valid_token_mask();
  CostWeights w;
  Rng rng(209);

  const int nq = 4, tc = prompt.token_count();
  Tensor scores({nq, tc});
  scores.fill_uniform(rng, 0.1, 0.9);
  Tensor boxes({nq, 4});
  for (int i = 0; i < nq; ++i) {
    boxes.at2(i, 0) = rng.uniform(0.3, 0.7);
    boxes.at2(i, 1) = rng.uniform(0.3, 0.7);
    boxes.at2(i, 2) = rng.uniform(0.1, 0.3);
    boxes.at2(i, 3) = rng.uniform(0.1, 0.3);
  }

  SUBCASE("empty image: all-zero targets, no box term, finite and differentiable") {
    ad::Var z = ad::leaf(random_tensor({nq, tc}, rng), true);
    StageForLoss st{ad::constant(boxes), ad::sigmoid(z)};
    auto r = total_loss({st}, Tensor(), {}, prompt, mask, w);
    CHECK(std::isfinite(r.total->scalar()));
    CHECK(r.l1_value == 0.0);
    CHECK(r.giou_value == 0.0);
    ad::backward(r.total);
    double gnorm = 0;
    for (double g : z->grad.vec()) gnorm += g * g;
    CHECK(gnorm > 0.0);
  }

  SUBCASE("single stage equals alignment + box loss computed directly") {
    Tensor gt_boxes({1, 4}, {0.5, 0.5, 0.2, 0.2});
    std::vector<int> gt_labels = {1};
    StageForLoss st{ad::constant(boxes), ad::constant(scores)};
    auto r = total_loss({st}, gt_boxes, gt_labels, prompt, mask, w);
    REQUIRE(r.assignments.size() == 1);

    auto cm = matching_cost(pool_category_scores(scores, prompt), boxes, gt_boxes, gt_labels, w);
    auto assign = hungarian_match(cm);
    Tensor targets = taxonomy::make_target_matrix(gt_labels, prompt, assign.query_to_gt, nq);
    const double align = alignment_loss(ad::constant(scores), targets, mask)->scalar();
    const double box = box_loss(ad::constant(boxes), gt_boxes, assign.query_to_gt, w)
                           .total->scalar();
    CHECK(r.total->scalar() == doctest::Approx(align + box).epsilon(1e-12));
  }

  SUBCASE("two stages sum the per-stage losses") {
    Tensor gt_boxes({2, 4}, {0.45, 0.5, 0.2, 0.25, 0.62, 0.48, 0.15, 0.2});
    std::vector<int> gt_labels = {0, 1};
    Tensor scores2({nq, tc});
    scores2.fill_uniform(rng, 0.1, 0.9);
    Tensor boxes2 = boxes;
    for (auto& v : boxes2.vec()) v = std::min(0.9, v + 0.01);

    StageForLoss s1{ad::constant(boxes), ad::constant(scores)};
    StageForLoss s2{ad::constant(boxes2), ad::constant(scores2)};
    auto both = total_loss({s1, s2}, gt_boxes, gt_labels, prompt, mask, w);
    auto only1 = total_loss({s1}, gt_boxes, gt_labels, prompt, mask, w);
    auto only2 = total_loss({s2}, gt_boxes, gt_labels, prompt, mask, w);
    CHECK(both.total->scalar() ==
          doctest::Approx(only1.total->scalar() + only2.total->scalar()).epsilon(1e-12));
  }

  SUBCASE("rpn-style stage without scores gets box supervision only") {
    Tensor gt_boxes({1, 4}, {0.5, 0.5, 0.2, 0.2});
    StageForLoss rpn{ad::constant(boxes), nullptr};
    auto r = total_loss({rpn}, gt_boxes, {0}, prompt, mask, w);
    CHECK(r.align_value == 0.0);
    CHECK(r.l1_value > 0.0);
  }
}

TEST_CASE("pool_category_scores: span means, truncated categories score zero") {
  taxonomy::CategoryVocabulary v;
  v.dataset_name = "pool";
  v.categories = {"traffic light", "cat"};
  auto prompt = taxonomy::tokenize_prompt(v, 64);
  const int tc = prompt.token_count();
  Tensor scores({1, tc});
  for (int j = 0; j < tc; ++j) scores.at2(0, j) = 0.1 * (j + 1);
  Tensor pooled = pool_category_scores(scores, prompt);
  const auto& span = prompt.span_map[0];
  double mean = 0;
  for (int j = span.begin; j < span.end; ++j) mean += scores.at2(0, j);
  mean /= span.length();
  CHECK(pooled.at2(0, 0) == doctest::Approx(mean));

  // single-token category pools to exactly that token's score
  const auto& cat_span = prompt.span_map[1];
  REQUIRE(cat_span.length() == 1);
  CHECK(pooled.at2(0, 1) == doctest::Approx(scores.at2(0, cat_span.begin)));

  // Var route agrees with the value route
  Tensor pooled_var = pool_category_scores_var(ad::constant(scores), prompt)->value;
  for (size_t i = 0; i < pooled.size(); ++i)
    CHECK(pooled_var[i] == doctest::Approx(pooled[i]).epsilon(1e-12));

  auto truncated = taxonomy::tokenize_prompt(v, 4);
  REQUIRE_FALSE(truncated.truncated_categories.empty());
  Rng r1(1);
  Tensor scores2({1, truncated.token_count()});
  scores2.fill_uniform(r1, 0.2, 0.9);
  Tensor pooled2 = pool_category_scores(scores2, truncated);
  CHECK(pooled2.at2(0, 1) == 0.0);
}
