// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/core/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dethub/core/errors.hpp"

namespace dethub::ad {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) rg = rg || p->requires_grad;
  }
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(fn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                     " vs " + b->value.shape_str());
}

void check_2d(const Var& a, const char* op) {
  if (a->value.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + a->value.shape_str());
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var leaf(Tensor v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad && g_grad_enabled;
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1) throw ShapeError("backward: root must be scalar");
  if (!root->requires_grad) return;

  // post-order DFS, parents before node
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    // consumers may have skipped this node entirely (e.g. the losing side
    // of a min/max); its grad is then all zero but must exist
    n->ensure_grad();
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var divide(const Var& a, const Var& b) {
  check_same_shape(a, b, "divide");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] /= b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i)
        g[i] -= self.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
    }
  });
}

Var emin(const Var& a, const Var& b) {
  check_same_shape(a, b, "emin");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a->value[i], b->value[i]);
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    for (size_t i = 0; i < self.value.size(); ++i) {
      const bool take_a = pa->value[i] <= pb->value[i];
      if (take_a && pa->requires_grad) pa->ensure_grad()[i] += self.grad[i];
      if (!take_a && pb->requires_grad) pb->ensure_grad()[i] += self.grad[i];
    }
  });
}

Var emax(const Var& a, const Var& b) {
  check_same_shape(a, b, "emax");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a->value[i], b->value[i]);
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
    for (size_t i = 0; i < self.value.size(); ++i) {
      const bool take_a = pa->value[i] >= pb->value[i];
      if (take_a && pa->requires_grad) pa->ensure_grad()[i] += self.grad[i];
      if (!take_a && pb->requires_grad) pb->ensure_grad()[i] += self.grad[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (double& v : out.vec()) v *= s;
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, s](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (double& v : out.vec()) v += s;
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = std::max(0.0, v);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i)
      if (pa->value[i] > 0) g[i] += self.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var expv(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = std::exp(v);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Var tanhv(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = std::tanh(v);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var clip_leaky(const Var& a, double lo, double hi, double leak) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = std::min(hi, std::max(lo, v));
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, lo, hi, leak](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double x = pa->value[i];
      g[i] += self.grad[i] * (x >= lo && x <= hi ? 1.0 : leak);
    }
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tensor out = a->value;
  for (double& v : out.vec()) v = std::min(hi, std::max(lo, v));
  Node* pa = a.get();
  // boundary-inclusive subgradient: values sitting exactly on a clamp edge
  // still receive gradient, so whole-image initial boxes are trainable
  return make_node(std::move(out), {a}, [pa, lo, hi](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double x = pa->value[i];
      if (x >= lo && x <= hi) g[i] += self.grad[i];
    }
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty input");
  Tensor out = xs[0]->value;
  for (size_t k = 1; k < xs.size(); ++k) {
    check_same_shape(xs[0], xs[k], "add_n");
    for (size_t i = 0; i < out.size(); ++i) out[i] += xs[k]->value[i];
  }
  std::vector<Node*> raw;
  raw.reserve(xs.size());
  for (const auto& x : xs) raw.push_back(x.get());
  return make_node(std::move(out), xs, [raw](Node& self) {
    for (Node* p : raw) {
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sum_all(const Var& a) {
  double s = 0;
  for (double v : a->value.vec()) s += v;
  Node* pa = a.get();
  return make_node(Tensor::scalar(s), {a}, [pa](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean_all(const Var& a) {
  if (a->value.size() == 0) throw ShapeError("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(a->value.size());
  double s = 0;
  for (double v : a->value.vec()) s += v;
  Node* pa = a.get();
  return make_node(Tensor::scalar(s * inv), {a}, [pa, inv](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
  });
}

// ---------------- matrix ----------------

Var matmul(const Var& a, const Var& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const int m = a->value.dim(0), k = a->value.dim(1);
  const int k2 = b->value.dim(0), n = b->value.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions " + a->value.shape_str() + " * " +
                     b->value.shape_str());
  Tensor out({m, n});
  {
    MapC A(a->value.data(), m, k), B(b->value.data(), k, n);
    MapM C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb, m, k, n](Node& self) {
    MapC G(self.grad.data(), m, n);
    if (pa->requires_grad) {
      MapC B(pb->value.data(), k, n);
      MapM GA(pa->ensure_grad().data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      MapC A(pa->value.data(), m, k);
      MapM GB(pb->ensure_grad().data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Var transpose(const Var& a) {
  check_2d(a, "transpose");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at2(j, i) = a->value.at2(i, j);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, m, n](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at2(i, j) += self.grad.at2(j, i);
  });
}

Var add_rowvec(const Var& mat, const Var& vec) {
  check_2d(mat, "add_rowvec");
  const int m = mat->value.dim(0), n = mat->value.dim(1);
  if (static_cast<int>(vec->value.size()) != n)
    throw ShapeError("add_rowvec: vector length " + vec->value.shape_str() +
                     " vs columns " + std::to_string(n));
  Tensor out = mat->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at2(i, j) += vec->value[j];
  Node* pm = mat.get();
  Node* pv = vec.get();
  return make_node(std::move(out), {mat, vec}, [pm, pv, m, n](Node& self) {
    if (pm->requires_grad) {
      Tensor& g = pm->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pv->requires_grad) {
      Tensor& g = pv->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += self.grad.at2(i, j);
    }
  });
}

Var softmax_rows(const Var& a) {
  check_2d(a, "softmax_rows");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = a->value.at2(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a->value.at2(i, j));
    double z = 0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(a->value.at2(i, j) - mx);
      out.at2(i, j) = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out.at2(i, j) /= z;
  }
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, m, n](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0;
      for (int j = 0; j < n; ++j) dot += self.grad.at2(i, j) * self.value.at2(i, j);
      for (int j = 0; j < n; ++j)
        g.at2(i, j) += self.value.at2(i, j) * (self.grad.at2(i, j) - dot);
    }
  });
}

Var slice_rows(const Var& a, int r0, int r1) {
  check_2d(a, "slice_rows");
  const int m = a->value.dim(0), n = a->value.dim(1);
  if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows: bad range");
  Tensor out({r1 - r0, n});
  std::copy(a->value.data() + static_cast<size_t>(r0) * n,
            a->value.data() + static_cast<size_t>(r1) * n, out.data());
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, r0, n](Node& self) {
    Tensor& g = pa->ensure_grad();
    const size_t off = static_cast<size_t>(r0) * n;
    for (size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  check_2d(a, "slice_cols");
  const int m = a->value.dim(0), n = a->value.dim(1);
  if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at2(i, j) = a->value.at2(i, c0 + j);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, c0, m, w](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) g.at2(i, c0 + j) += self.grad.at2(i, j);
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty input");
  const int n = xs[0]->value.dim(1);
  int m = 0;
  for (const auto& x : xs) {
    check_2d(x, "concat_rows");
    if (x->value.dim(1) != n) throw ShapeError("concat_rows: column mismatch");
    m += x->value.dim(0);
  }
  Tensor out({m, n});
  size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.vec().begin(), x->value.vec().end(), out.data() + off);
    off += x->value.size();
  }
  std::vector<Node*> raw;
  for (const auto& x : xs) raw.push_back(x.get());
  return make_node(std::move(out), xs, [raw](Node& self) {
    size_t off = 0;
    for (Node* p : raw) {
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input");
  const int m = xs[0]->value.dim(0);
  int n = 0;
  for (const auto& x : xs) {
    check_2d(x, "concat_cols");
    if (x->value.dim(0) != m) throw ShapeError("concat_cols: row mismatch");
    n += x->value.dim(1);
  }
  Tensor out({m, n});
  int coff = 0;
  for (const auto& x : xs) {
    const int w = x->value.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at2(i, coff + j) = x->value.at2(i, j);
    coff += w;
  }
  std::vector<Node*> raw;
  for (const auto& x : xs) raw.push_back(x.get());
  return make_node(std::move(out), xs, [raw, m](Node& self) {
    int coff = 0;
    for (Node* p : raw) {
      const int w = p->value.dim(1);
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j) g.at2(i, j) += self.grad.at2(i, coff + j);
      }
      coff += w;
    }
  });
}

Var gather_rows(const Var& a, const std::vector<int>& idx) {
  check_2d(a, "gather_rows");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({static_cast<int>(idx.size()), n});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= m) throw ShapeError("gather_rows: index out of range");
    std::copy(a->value.data() + static_cast<size_t>(idx[i]) * n,
              a->value.data() + static_cast<size_t>(idx[i] + 1) * n,
              out.data() + i * n);
  }
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, idx, n](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < n; ++j)
        g.at2(idx[i], j) += self.grad.at2(static_cast<int>(i), j);
  });
}

// ---------------- normalization ----------------

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_2d(x, "layer_norm_rows");
  const int m = x->value.dim(0), n = x->value.dim(1);
  if (static_cast<int>(gamma->value.size()) != n || static_cast<int>(beta->value.size()) != n)
    throw ShapeError("layer_norm_rows: affine size mismatch");
  Tensor out({m, n});
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    double mu = 0;
    for (int j = 0; j < n; ++j) mu += x->value.at2(i, j);
    mu /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      const double d = x->value.at2(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) {
      const double h = (x->value.at2(i, j) - mu) * inv;
      xhat.at2(i, j) = h;
      out.at2(i, j) = gamma->value[j] * h + beta->value[j];
    }
  }
  Node* px = x.get();
  Node* pg = gamma.get();
  Node* pb = beta.get();
  return make_node(std::move(out), {x, gamma, beta},
                   [px, pg, pb, m, n, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Node& self) {
    for (int i = 0; i < m; ++i) {
      double s1 = 0, s2 = 0;
      for (int j = 0; j < n; ++j) {
        const double t = self.grad.at2(i, j) * pg->value[j];
        s1 += t;
        s2 += t * xhat.at2(i, j);
      }
      if (px->requires_grad) {
        Tensor& gx = px->ensure_grad();
        for (int j = 0; j < n; ++j) {
          const double t = self.grad.at2(i, j) * pg->value[j];
          gx.at2(i, j) += inv_std[i] * (t - s1 / n - xhat.at2(i, j) * s2 / n);
        }
      }
      if (pg->requires_grad) {
        Tensor& gg = pg->ensure_grad();
        for (int j = 0; j < n; ++j) gg[j] += self.grad.at2(i, j) * xhat.at2(i, j);
      }
      if (pb->requires_grad) {
        Tensor& gb = pb->ensure_grad();
        for (int j = 0; j < n; ++j) gb[j] += self.grad.at2(i, j);
      }
    }
  });
}

Var group_norm_hwc(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
  if (x->value.ndim() != 3)
    throw ShapeError("group_norm_hwc: expected [H,W,C], got " + x->value.shape_str());
  const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
  if (C % groups != 0) throw ShapeError("group_norm_hwc: groups must divide channels");
  if (static_cast<int>(gamma->value.size()) != C || static_cast<int>(beta->value.size()) != C)
    throw ShapeError("group_norm_hwc: affine size mismatch");
  const int gc = C / groups;
  const double m = static_cast<double>(H) * W * gc;
  Tensor out({H, W, C});
  Tensor xhat({H, W, C});
  std::vector<double> inv_std(groups);
  for (int g = 0; g < groups; ++g) {
    const int c0 = g * gc, c1 = c0 + gc;
    double mu = 0;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int c = c0; c < c1; ++c) mu += x->value.at3(y, xx, c);
    mu /= m;
    double var = 0;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int c = c0; c < c1; ++c) {
          const double d = x->value.at3(y, xx, c) - mu;
          var += d * d;
        }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[g] = inv;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int c = c0; c < c1; ++c) {
          const double h = (x->value.at3(y, xx, c) - mu) * inv;
          xhat.at3(y, xx, c) = h;
          out.at3(y, xx, c) = gamma->value[c] * h + beta->value[c];
        }
  }
  Node* px = x.get();
  Node* pg = gamma.get();
  Node* pb = beta.get();
  return make_node(std::move(out), {x, gamma, beta},
                   [px, pg, pb, H, W, C, groups, gc, m, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Node& self) {
    for (int g = 0; g < groups; ++g) {
      const int c0 = g * gc, c1 = c0 + gc;
      double s1 = 0, s2 = 0;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          for (int c = c0; c < c1; ++c) {
            const double t = self.grad.at3(y, xx, c) * pg->value[c];
            s1 += t;
            s2 += t * xhat.at3(y, xx, c);
          }
      if (px->requires_grad) {
        Tensor& gx = px->ensure_grad();
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx)
            for (int c = c0; c < c1; ++c) {
              const double t = self.grad.at3(y, xx, c) * pg->value[c];
              gx.at3(y, xx, c) +=
                  inv_std[g] * (t - s1 / m - xhat.at3(y, xx, c) * s2 / m);
            }
      }
    }
    if (pg->requires_grad) {
      Tensor& gg = pg->ensure_grad();
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          for (int c = 0; c < C; ++c)
            gg[c] += self.grad.at3(y, xx, c) * xhat.at3(y, xx, c);
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          for (int c = 0; c < C; ++c) gb[c] += self.grad.at3(y, xx, c);
    }
  });
}

// ---------------- convolution ----------------

namespace {

// column matrix for zero-padded convolution: rows are output pixels,
// columns are (ky, kx, ci) flattened to match kernel memory layout
Tensor build_im2col(const Tensor& x, int k, int stride, int Ho, int Wo) {
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int pad = (k - 1) / 2;
  Tensor col({Ho * Wo, k * k * C});
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* row = col.data() + (static_cast<size_t>(oy) * Wo + ox) * (k * k * C);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          double* dst = row + (ky * k + kx) * C;
          if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
            const double* src = x.data() + (static_cast<size_t>(iy) * W + ix) * C;
            std::copy(src, src + C, dst);
          }
          // else leave zeros
        }
      }
    }
  }
  return col;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, int stride) {
  if (x->value.ndim() != 3)
    throw ShapeError("conv2d: input must be [H,W,C], got " + x->value.shape_str());
  if (kernel->value.ndim() != 4)
    throw ShapeError("conv2d: kernel must be [k,k,Cin,Cout], got " + kernel->value.shape_str());
  const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
  const int k = kernel->value.dim(0);
  if (kernel->value.dim(1) != k) throw ShapeError("conv2d: kernel must be square");
  if (k < 1 || k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd and >= 1");
  if (kernel->value.dim(2) != C)
    throw ShapeError("conv2d: input channels " + std::to_string(C) + " vs kernel " +
                     std::to_string(kernel->value.dim(2)));
  const int Cout = kernel->value.dim(3);
  const int Ho = (H + stride - 1) / stride;
  const int Wo = (W + stride - 1) / stride;

  Tensor col = build_im2col(x->value, k, stride, Ho, Wo);
  const int kk = k * k * C;
  Tensor out({Ho, Wo, Cout});
  {
    MapC A(col.data(), Ho * Wo, kk), K(kernel->value.data(), kk, Cout);
    MapM O(out.data(), Ho * Wo, Cout);
    O.noalias() = A * K;
  }
  Node* px = x.get();
  Node* pk = kernel.get();
  return make_node(std::move(out), {x, kernel},
                   [px, pk, k, stride, H, W, C, Ho, Wo, Cout, kk,
                    col = std::move(col)](Node& self) {
    MapC G(self.grad.data(), Ho * Wo, Cout);
    if (pk->requires_grad) {
      MapC A(col.data(), Ho * Wo, kk);
      MapM GK(pk->ensure_grad().data(), kk, Cout);
      GK.noalias() += A.transpose() * G;
    }
    if (px->requires_grad) {
      Tensor dcol({Ho * Wo, kk});
      {
        MapC K(pk->value.data(), kk, Cout);
        MapM DC(dcol.data(), Ho * Wo, kk);
        DC.noalias() = G * K.transpose();
      }
      Tensor& gx = px->ensure_grad();
      const int pad = (k - 1) / 2;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double* row = dcol.data() + (static_cast<size_t>(oy) * Wo + ox) * kk;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              const double* src = row + (ky * k + kx) * C;
              double* dst = gx.data() + (static_cast<size_t>(iy) * W + ix) * C;
              for (int c = 0; c < C; ++c) dst[c] += src[c];
            }
          }
        }
      }
    }
  });
}

// ---------------- region pooling ----------------

Var roi_pool_bilinear(const Var& fmap, const Var& box, int out_size) {
  if (fmap->value.ndim() != 3)
    throw ShapeError("roi_pool_bilinear: feature map must be [H,W,C]");
  if (box->value.size() != 4)
    throw ShapeError("roi_pool_bilinear: box must have 4 entries");
  const int H = fmap->value.dim(0), W = fmap->value.dim(1), C = fmap->value.dim(2);
  const int P = out_size;
  const double cx = box->value[0], cy = box->value[1];
  const double bw = box->value[2], bh = box->value[3];
  const double x1 = (cx - bw / 2) * W, y1 = (cy - bh / 2) * H;
  const double fw = bw * W, fh = bh * H;

  Tensor out({P, P, C});
  const Tensor& F = fmap->value;
  auto clampi = [](int v, int hi) { return std::min(hi, std::max(0, v)); };
  for (int i = 0; i < P; ++i) {
    const double ys = y1 + (i + 0.5) * fh / P - 0.5;
    const int iy0 = static_cast<int>(std::floor(ys));
    const double wy = ys - iy0;
    const int y0 = clampi(iy0, H - 1), y0p = clampi(iy0 + 1, H - 1);
    for (int j = 0; j < P; ++j) {
      const double xs = x1 + (j + 0.5) * fw / P - 0.5;
      const int ix0 = static_cast<int>(std::floor(xs));
      const double wx = xs - ix0;
      const int x0 = clampi(ix0, W - 1), x0p = clampi(ix0 + 1, W - 1);
      for (int c = 0; c < C; ++c) {
        out.at3(i, j, c) = (1 - wy) * ((1 - wx) * F.at3(y0, x0, c) + wx * F.at3(y0, x0p, c)) +
                           wy * ((1 - wx) * F.at3(y0p, x0, c) + wx * F.at3(y0p, x0p, c));
      }
    }
  }
  Node* pf = fmap.get();
  Node* pb = box.get();
  return make_node(std::move(out), {fmap, box}, [pf, pb, H, W, C, P](Node& self) {
    const Tensor& F = pf->value;
    const double cx = pb->value[0], cy = pb->value[1];
    const double bw = pb->value[2], bh = pb->value[3];
    const double x1 = (cx - bw / 2) * W, y1 = (cy - bh / 2) * H;
    const double fw = bw * W, fh = bh * H;
    auto clampi = [](int v, int hi) { return std::min(hi, std::max(0, v)); };
    for (int i = 0; i < P; ++i) {
      const double ti = (i + 0.5) / P;
      const double ys = y1 + ti * fh - 0.5;
      const int iy0 = static_cast<int>(std::floor(ys));
      const double wy = ys - iy0;
      const int y0 = clampi(iy0, H - 1), y0p = clampi(iy0 + 1, H - 1);
      for (int j = 0; j < P; ++j) {
        const double tj = (j + 0.5) / P;
        const double xs = x1 + tj * fw - 0.5;
        const int ix0 = static_cast<int>(std::floor(xs));
        const double wx = xs - ix0;
        const int x0 = clampi(ix0, W - 1), x0p = clampi(ix0 + 1, W - 1);
        double dxs = 0, dys = 0;
        for (int c = 0; c < C; ++c) {
          const double g = self.grad.at3(i, j, c);
          if (g == 0.0) continue;
          if (pf->requires_grad) {
            Tensor& gf = pf->ensure_grad();
            gf.at3(y0, x0, c) += g * (1 - wy) * (1 - wx);
            gf.at3(y0, x0p, c) += g * (1 - wy) * wx;
            gf.at3(y0p, x0, c) += g * wy * (1 - wx);
            gf.at3(y0p, x0p, c) += g * wy * wx;
          }
          dxs += g * ((1 - wy) * (F.at3(y0, x0p, c) - F.at3(y0, x0, c)) +
                      wy * (F.at3(y0p, x0p, c) - F.at3(y0p, x0, c)));
          dys += g * ((1 - wx) * (F.at3(y0p, x0, c) - F.at3(y0, x0, c)) +
                      wx * (F.at3(y0p, x0p, c) - F.at3(y0, x0p, c)));
        }
        if (pb->requires_grad) {
          Tensor& gb = pb->ensure_grad();
          // xs = (cx - bw/2)W + tj*bw*W - 0.5
          gb[0] += dxs * W;
          gb[2] += dxs * W * (tj - 0.5);
          gb[1] += dys * H;
          gb[3] += dys * H * (ti - 0.5);
        }
      }
    }
  });
}

// ---------------- losses / geometry ----------------

Var bce_sum(const Var& probs, const Tensor& targets, const Tensor& mask, double eps) {
  if (!probs->value.same_shape(targets) || !probs->value.same_shape(mask))
    throw ShapeError("bce_sum: shape mismatch probs " + probs->value.shape_str());
  double loss = 0;
  for (size_t i = 0; i < probs->value.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double p = std::min(1.0 - eps, std::max(eps, probs->value[i]));
    const double t = targets[i];
    loss += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  Node* pp = probs.get();
  return make_node(Tensor::scalar(loss), {probs},
                   [pp, targets, mask, eps](Node& self) {
    Tensor& g = pp->ensure_grad();
    const double go = self.grad[0];
    for (size_t i = 0; i < g.size(); ++i) {
      if (mask[i] == 0.0) continue;
      const double p = pp->value[i];
      if (p <= eps || p >= 1.0 - eps) continue;  // clamped: flat
      const double t = targets[i];
      g[i] += go * (-t / p + (1.0 - t) / (1.0 - p));
    }
  });
}

Var box_cxcywh_to_xyxy(const Var& b) {
  check_2d(b, "box_cxcywh_to_xyxy");
  if (b->value.dim(1) != 4) throw ShapeError("box_cxcywh_to_xyxy: expected [M,4]");
  const int m = b->value.dim(0);
  Tensor out({m, 4});
  for (int i = 0; i < m; ++i) {
    const double cx = b->value.at2(i, 0), cy = b->value.at2(i, 1);
    const double w = b->value.at2(i, 2), h = b->value.at2(i, 3);
    out.at2(i, 0) = cx - w / 2;
    out.at2(i, 1) = cy - h / 2;
    out.at2(i, 2) = cx + w / 2;
    out.at2(i, 3) = cy + h / 2;
  }
  Node* pb = b.get();
  return make_node(std::move(out), {b}, [pb, m](Node& self) {
    Tensor& g = pb->ensure_grad();
    for (int i = 0; i < m; ++i) {
      g.at2(i, 0) += self.grad.at2(i, 0) + self.grad.at2(i, 2);
      g.at2(i, 1) += self.grad.at2(i, 1) + self.grad.at2(i, 3);
      g.at2(i, 2) += (self.grad.at2(i, 2) - self.grad.at2(i, 0)) / 2;
      g.at2(i, 3) += (self.grad.at2(i, 3) - self.grad.at2(i, 1)) / 2;
    }
  });
}

Var giou_pairwise(const Var& pred, const Var& gt) {
  check_2d(pred, "giou_pairwise");
  check_same_shape(pred, gt, "giou_pairwise");
  if (pred->value.dim(1) != 4) throw ShapeError("giou_pairwise: expected [M,4]");
  const int m = pred->value.dim(0);
  auto col = [](const Var& v, int c) { return slice_cols(v, c, c + 1); };
  Var px1 = col(pred, 0), py1 = col(pred, 1), px2 = col(pred, 2), py2 = col(pred, 3);
  Var gx1 = col(gt, 0), gy1 = col(gt, 1), gx2 = col(gt, 2), gy2 = col(gt, 3);

  Var iw = relu(sub(emin(px2, gx2), emax(px1, gx1)));
  Var ih = relu(sub(emin(py2, gy2), emax(py1, gy1)));
  Var inter = mul(iw, ih);
  Var area_p = mul(sub(px2, px1), sub(py2, py1));
  Var area_g = mul(sub(gx2, gx1), sub(gy2, gy1));
  Var uni = sub(add(area_p, area_g), inter);
  Var iou = divide(inter, uni);
  Var hw = sub(emax(px2, gx2), emin(px1, gx1));
  Var hh = sub(emax(py2, gy2), emin(py1, gy1));
  Var hull = mul(hw, hh);
  // GIoU = IoU - (hull - union) / hull = IoU - 1 + union / hull
  Var g = add_scalar(add(iou, divide(uni, hull)), -1.0);
  return reshape(g, {m});
}

Var l1_sum(const Var& a, const Tensor& b) {
  if (!a->value.same_shape(b)) throw ShapeError("l1_sum: shape mismatch");
  double s = 0;
  for (size_t i = 0; i < a->value.size(); ++i) s += std::abs(a->value[i] - b[i]);
  Node* pa = a.get();
  return make_node(Tensor::scalar(s), {a}, [pa, b](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double d = pa->value[i] - b[i];
      if (d > 0)
        g[i] += self.grad[0];
      else if (d < 0)
        g[i] -= self.grad[0];
    }
  });
}

}  // namespace dethub::ad
