// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dethub/core/params.hpp"

namespace dethub::engine {

// Decoupled-weight-decay adaptive optimizer.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  // apply one update from the accumulated gradients; lr_scale multiplies
  // the base learning rate (schedule hook)
  void step(ParamStore& store, double lr_scale);

  int64_t step_count() const { return t_; }
  double base_lr() const { return lr_; }

  std::vector<std::pair<std::string, Tensor>> state(const ParamStore& store) const;
  void load_state(const ParamStore& store,
                  const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// base * drop^(number of milestones passed); steps are 1-based, a milestone
// at fraction f fires after step floor(f * total_steps)
double lr_at_step(double base, int step, int total_steps, const std::vector<double>& milestones,
                  double drop);

// returns the pre-clip norm; scales gradients so their global norm is at
// most max_norm (no-op when max_norm <= 0)
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace dethub::engine
