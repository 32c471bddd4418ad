// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dethub/core/autodiff.hpp"

namespace dethub {

// Named, ordered collection of trainable leaves. Creation order is the
// canonical order for initialization draws, gradient clipping, optimizer
// state and serialization, so it must be deterministic.
class ParamStore {
 public:
  ad::Var create(const std::string& name, Tensor init);
  ad::Var get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }

  void zero_grads();
  double grad_norm() const;
  void scale_grads(double s);
  size_t total_size() const;
  uint64_t values_hash() const;

  // overwrite values from another store's state (names must match)
  void load_values(const std::vector<std::pair<std::string, Tensor>>& state);
  std::vector<std::pair<std::string, Tensor>> state() const;

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// weight blob io, shared by checkpoints and the embedding cache
void write_tensor_blob(const std::string& path,
                       const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> read_tensor_blob(const std::string& path);

}  // namespace dethub
