// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/data/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "dethub/core/errors.hpp"
#include "dethub/core/rng.hpp"

namespace dethub::data {

std::vector<double> repeat_factor_weights(const std::vector<double>& category_frequencies,
                                          double threshold, int dataset_size) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("rebalance threshold must lie in (0, 1)");
  std::vector<double> out(category_frequencies.size(), 1.0);
  for (size_t c = 0; c < category_frequencies.size(); ++c) {
    double f = category_frequencies[c];
    if (f <= 0.0) f = 1.0 / std::max(1, dataset_size);
    out[c] = std::max(1.0, std::sqrt(threshold / f));
  }
  return out;
}

SamplerPlan make_sampler_plan(const std::vector<const LoadedDataset*>& datasets,
                              const SamplerConfig& cfg) {
  if (datasets.empty()) throw DataError("sampler needs at least one dataset");
  for (const auto* ds : datasets)
    if (ds->records.empty()) throw DataError("empty dataset: " + ds->name);
  if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");

  SamplerPlan plan;
  plan.seed = cfg.seed;
  Rng rng(hash_combine(cfg.seed, 0x73616d706c6572ULL));

  for (size_t di = 0; di < datasets.size(); ++di) {
    const LoadedDataset& ds = *datasets[di];
    std::vector<double> cat_factors;
    if (cfg.balancing)
      cat_factors =
          repeat_factor_weights(ds.category_frequencies, cfg.rebalance_threshold, ds.size());

    std::vector<double> factors(ds.records.size(), 1.0);
    for (size_t ri = 0; ri < ds.records.size(); ++ri) {
      if (cfg.balancing) {
        double f = 1.0;
        for (int label : ds.records[ri].labels)
          f = std::max(f, cat_factors[static_cast<size_t>(label)]);
        factors[ri] = f;
      }
      const double factor = factors[ri];
      int repeats = static_cast<int>(std::floor(factor));
      const double frac = factor - repeats;
      if (frac > 0 && rng.uniform() < frac) ++repeats;  // stochastic rounding
      for (int k = 0; k < repeats; ++k)
        plan.schedule.push_back({static_cast<int>(di), static_cast<int>(ri),
                                 ds.records[ri].image_id, ds.name});
    }
    plan.per_image_factor.push_back(std::move(factors));
  }

  rng.shuffle(plan.schedule);

  if (cfg.homogeneous_batches) {
    // regroup the shuffled stream into single-dataset chunks of batch_size,
    // then shuffle the chunk order
    std::vector<std::vector<PlanItem>> per_ds(datasets.size());
    for (auto& item : plan.schedule)
      per_ds[static_cast<size_t>(item.dataset_index)].push_back(item);
    std::vector<std::vector<PlanItem>> chunks;
    for (auto& items : per_ds)
      for (size_t i = 0; i < items.size(); i += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(items.size(), i + static_cast<size_t>(cfg.batch_size));
        chunks.emplace_back(items.begin() + static_cast<long>(i),
                            items.begin() + static_cast<long>(end));
      }
    rng.shuffle(chunks);
    plan.schedule.clear();
    for (auto& chunk : chunks)
      plan.schedule.insert(plan.schedule.end(), chunk.begin(), chunk.end());
  }
  return plan;
}

}  // namespace dethub::data
