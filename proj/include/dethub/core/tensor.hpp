// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "dethub/core/errors.hpp"
#include "dethub/core/rng.hpp"

namespace dethub {

// Dense row-major double tensor. Feature maps use [H, W, C] layout,
// matrices [rows, cols], convolution kernels [kh, kw, c_in, c_out].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel(shape_), 0.0);
  }
  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw ShapeError("tensor data size does not match shape " + shape_str());
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at2(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at2(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double& at3(int y, int x, int c) {
    return data_[(static_cast<size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  double at3(int y, int x, int c) const {
    return data_[(static_cast<size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  double& at4(int a, int b, int c, int d) {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  double at4(int a, int b, int c, int d) const {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const {
    if (numel(shape) != size())
      throw ShapeError("reshape " + shape_str() + " -> incompatible element count");
    return Tensor(std::move(shape), data_);
  }

  void fill_normal(Rng& rng, double stddev) {
    for (double& v : data_) v = rng.normal() * stddev;
  }
  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& v : data_) v = rng.uniform(lo, hi);
  }

  uint64_t content_hash() const {
    uint64_t h = fnv1a64(data_.data(), data_.size() * sizeof(double));
    for (int d : shape_) h = hash_combine(h, static_cast<uint64_t>(d));
    return h;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace dethub
