// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/optimizer.hpp"

#include <cmath>
#include <map>

#include "dethub/core/errors.hpp"

namespace dethub::engine {

void AdamW::step(ParamStore& store, double lr_scale) {
  const auto& entries = store.entries();
  if (m_.empty()) {
    m_.reserve(entries.size());
    v_.reserve(entries.size());
    for (const auto& [name, p] : entries) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != entries.size())
    throw ConfigError("optimizer state does not match parameter count");
  ++t_;
  const double lr = lr_ * lr_scale;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < entries.size(); ++i) {
    ad::Var p = entries[i].second;
    if (!p->grad.same_shape(p->value)) continue;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad[k];
      m[k] = b1_ * m[k] + (1.0 - b1_) * g;
      v[k] = b2_ * v[k] + (1.0 - b2_) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p->value[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->value[k]);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> AdamW::state(const ParamStore& store) const {
  std::vector<std::pair<std::string, Tensor>> out;
  Tensor meta({1});
  meta[0] = static_cast<double>(t_);
  out.emplace_back("adamw.step", meta);
  for (size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back("m." + store.entries()[i].first, m_[i]);
    out.emplace_back("v." + store.entries()[i].first, v_[i]);
  }
  return out;
}

void AdamW::load_state(const ParamStore& store,
                       const std::vector<std::pair<std::string, Tensor>>& state) {
  m_.clear();
  v_.clear();
  m_.resize(store.entries().size());
  v_.resize(store.entries().size());
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : state) lookup[name] = &t;
  auto meta = lookup.find("adamw.step");
  if (meta == lookup.end()) throw DataError("optimizer state missing step counter");
  t_ = static_cast<int64_t>((*meta->second)[0]);
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const std::string& pname = store.entries()[i].first;
    auto mi = lookup.find("m." + pname);
    auto vi = lookup.find("v." + pname);
    if (mi == lookup.end() || vi == lookup.end())
      throw DataError("optimizer state missing moments for " + pname);
    m_[i] = *mi->second;
    v_[i] = *vi->second;
  }
}

double lr_at_step(double base, int step, int total_steps,
                  const std::vector<double>& milestones, double drop) {
  double lr = base;
  for (double m : milestones) {
    const int at = static_cast<int>(std::floor(m * total_steps));
    if (step > at) lr *= drop;
  }
  return lr;
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0 && norm > max_norm && norm > 0) store.scale_grads(max_norm / norm);
  return norm;
}

}  // namespace dethub::engine
