// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dethub/data/coco.hpp"

namespace dethub::data {

struct SamplerConfig {
  uint64_t seed = 0;
  bool balancing = false;
  double rebalance_threshold = 0.01;
  bool homogeneous_batches = false;
  int batch_size = 2;
};

struct PlanItem {
  int dataset_index = 0;
  int record_index = 0;
  int64_t image_id = 0;
  std::string dataset_name;
};

struct SamplerPlan {
  std::vector<PlanItem> schedule;
  // per dataset, per record: the (fractional) repeat factor before rounding
  std::vector<std::vector<double>> per_image_factor;
  uint64_t seed = 0;
};

// Per-category repeat factors r_c = max(1, sqrt(threshold / f_c)).
// Zero-frequency categories are treated as f_c = 1 / dataset_size.
std::vector<double> repeat_factor_weights(const std::vector<double>& category_frequencies,
                                          double threshold, int dataset_size);

// One epoch over the union of all datasets. With balancing, fractional
// repeat factors are rounded stochastically under the plan seed. With
// homogeneous batching, the shuffled stream is rearranged so every
// batch_size-sized chunk comes from a single dataset.
SamplerPlan make_sampler_plan(const std::vector<const LoadedDataset*>& datasets,
                              const SamplerConfig& cfg);

}  // namespace dethub::data
