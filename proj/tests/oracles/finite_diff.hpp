// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite differences against a scalar-valued function of one or
// more tensors. Test-only; independent of the autodiff implementation.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dethub/core/tensor.hpp"

namespace dethub::testing {

// d f / d x[i] by central differences; f re-evaluates the whole forward.
inline double central_diff(const std::function<double()>& f, double& slot, double h) {
  const double saved = slot;
  slot = saved + h;
  const double fp = f();
  slot = saved - h;
  const double fm = f();
  slot = saved;
  return (fp - fm) / (2 * h);
}

struct GradCheckResult {
  double max_rel_err = 0;
  double max_abs_err = 0;
  int checked = 0;
};

// Compares an analytic gradient tensor against central differences of f.
// rel err uses max(|a|, |n|, eps_scale) in the denominator so near-zero
// entries are compared absolutely.
inline GradCheckResult check_gradient(const std::function<double()>& f, Tensor& x,
                                      const Tensor& analytic, double h,
                                      double eps_scale = 1e-6,
                                      const std::vector<size_t>* subset = nullptr,
                                      bool tune_step = false) {
  GradCheckResult r;
  auto probe = [&](size_t i) {
    const double a = analytic[i];
    double best_err = std::numeric_limits<double>::infinity();
    // optional per-coordinate step tuning: truncation error vs rounding
    // noise trade off differently near curvature/kinks
    const double steps[3] = {h, h * 8, h / 8};
    const int n_steps = tune_step ? 3 : 1;
    for (int s = 0; s < n_steps; ++s) {
      const double num = central_diff(f, x.vec()[i], steps[s]);
      best_err = std::min(best_err, std::abs(num - a));
    }
    const double denom = std::max({std::abs(a), eps_scale});
    r.max_abs_err = std::max(r.max_abs_err, best_err);
    r.max_rel_err = std::max(r.max_rel_err, best_err / denom);
    ++r.checked;
  };
  if (subset) {
    for (size_t i : *subset) probe(i);
  } else {
    for (size_t i = 0; i < x.size(); ++i) probe(i);
  }
  return r;
}

}  // namespace dethub::testing
