// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/core/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dethub/core/errors.hpp"

namespace dethub {

ad::Var ParamStore::create(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  ad::Var v = ad::leaf(std::move(init), true);
  v->requires_grad = true;  // independent of the grad-mode at construction time
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].second;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : entries_) {
    v->ensure_grad();
    v->zero_grad();
  }
}

double ParamStore::grad_norm() const {
  double sq = 0;
  for (const auto& [name, v] : entries_) {
    if (!v->grad.same_shape(v->value)) continue;
    for (double g : v->grad.vec()) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParamStore::scale_grads(double s) {
  for (auto& [name, v] : entries_) {
    if (!v->grad.same_shape(v->value)) continue;
    for (double& g : v->grad.vec()) g *= s;
  }
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& [name, v] : entries_) n += v->value.size();
  return n;
}

uint64_t ParamStore::values_hash() const {
  uint64_t h = 0xabcdef0123456789ULL;
  for (const auto& [name, v] : entries_) {
    h = hash_combine(h, fnv1a64(name));
    h = hash_combine(h, v->value.content_hash());
  }
  return h;
}

void ParamStore::load_values(const std::vector<std::pair<std::string, Tensor>>& state) {
  for (const auto& [name, t] : state) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("checkpoint parameter not in model: " + name);
    Tensor& dst = entries_[it->second].second->value;
    if (!dst.same_shape(t))
      throw DataError("checkpoint shape mismatch for " + name + ": " + t.shape_str() +
                      " vs " + dst.shape_str());
    dst = t;
  }
}

std::vector<std::pair<std::string, Tensor>> ParamStore::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(entries_.size());
  for (const auto& [name, v] : entries_) out.emplace_back(name, v->value);
  return out;
}

namespace {
constexpr uint64_t kBlobMagic = 0x44485542'54454e53ULL;  // "DHUB" "TENS"

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void write_tensor_blob(const std::string& path,
                       const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  write_pod(f, kBlobMagic);
  write_pod(f, static_cast<uint64_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<uint32_t>(t.ndim()));
    for (int d : t.shape()) write_pod(f, static_cast<int64_t>(d));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!f) throw DataError("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_tensor_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  uint64_t magic = 0, count = 0;
  read_pod(f, magic);
  if (magic != kBlobMagic) throw DataError("not a tensor blob: " + path);
  read_pod(f, count);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = 0;
    read_pod(f, name_len);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint32_t ndim = 0;
    read_pod(f, ndim);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) {
      int64_t v = 0;
      read_pod(f, v);
      shape[d] = static_cast<int>(v);
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw DataError("truncated tensor blob: " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace dethub
