// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace c2e {

namespace {

thread_local bool g_grad_enabled = true;

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr new_node(std::vector<size_t> shape, std::vector<double> data) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

// Attaches parents and a backward closure only when recording is on and at
// least one parent tracks gradients.
Tensor make_op(std::vector<size_t> shape, std::vector<double> data,
               std::initializer_list<Tensor> parents,
               std::function<void(detail::Node&)> bw) {
  auto n = new_node(std::move(shape), std::move(data));
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    n->requires_grad = true;
    for (const Tensor& p : parents) n->parents.push_back(p.handle());
    n->backward = std::move(bw);
  }
  return Tensor::wrap(std::move(n));
}

double* grad_of(const NodePtr& n) {
  n->ensure_grad();
  return n->grad.data();
}

}  // namespace

// ----- Tensor basics -----

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  size_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, 0.0));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::constant(std::vector<size_t> shape, double value) {
  size_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  auto node = new_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  size_t n = shape_numel(shape);
  std::vector<double> d(n);
  for (double& x : d) x = rng.normal() * stddev;
  auto node = new_node(std::move(shape), std::move(d));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor " + shape_str(shape()) + " is not scalar");
  return node_->data[0];
}

double Tensor::at(std::initializer_list<size_t> idx) const {
  const auto& s = shape();
  if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch");
  size_t off = 0;
  size_t i = 0;
  for (size_t v : idx) {
    off = off * s[i] + v;
    ++i;
  }
  return node_->data[off];
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw ShapeError("backward: root must be a defined scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ----- elementwise -----

namespace {

Tensor binary_same_shape(const char* name, const Tensor& a, const Tensor& b,
                         const std::function<double(double, double)>& f,
                         std::function<void(detail::Node&, const NodePtr&, const NodePtr&)> bw) {
  if (a.shape() != b.shape()) shape_fail(name, a, b);
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i], b.data()[i]);
  NodePtr an = a.handle(), bn = b.handle();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn, bw](detail::Node& n) { bw(n, an, bn); });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; },
      [](detail::Node& n, const NodePtr& an, const NodePtr& bn) {
        if (an->requires_grad) {
          double* ga = grad_of(an);
          for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          double* gb = grad_of(bn);
          for (size_t i = 0; i < n.size(); ++i) gb[i] += n.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](detail::Node& n, const NodePtr& an, const NodePtr& bn) {
        if (an->requires_grad) {
          double* ga = grad_of(an);
          for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          double* gb = grad_of(bn);
          for (size_t i = 0; i < n.size(); ++i) gb[i] -= n.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](detail::Node& n, const NodePtr& an, const NodePtr& bn) {
        if (an->requires_grad) {
          double* ga = grad_of(an);
          for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
          double* gb = grad_of(bn);
          for (size_t i = 0; i < n.size(); ++i) gb[i] += n.grad[i] * an->data[i];
        }
      });
}

namespace {

Tensor unary(const Tensor& a, const std::function<double(double)>& f,
             // dval(x, y) = d out / d x given input x and output y
             const std::function<double(double, double)>& dval) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  NodePtr an = a.handle();
  return make_op(a.shape(), std::move(out), {a}, [an, dval](detail::Node& n) {
    double* ga = grad_of(an);
    for (size_t i = 0; i < n.size(); ++i)
      ga[i] += n.grad[i] * dval(an->data[i], n.data[i]);
  });
}

}  // namespace

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor tanh_t(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor softplus_t(const Tensor& a) {
  return unary(a,
               [](double x) {
                 if (x > 30.0) return x;
                 if (x < -30.0) return std::exp(x);
                 return std::log1p(std::exp(x));
               },
               [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor gelu_t(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(a,
               [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
               [](double x, double) {
                 double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                 double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                 return cdf + x * pdf;
               });
}

Tensor reciprocal_t(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / x; },
               [](double, double y) { return -y * y; });
}

// ----- matmul family -----

namespace {

// C[n,m] += A[n,k] * B[k,m]
void gemm_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n,m] += A[n,k] * B[m,k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (size_t j = 0; j < m; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C[k,m] += A[n,k]^T * B[n,m]
void gemm_tn_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * m;
      for (size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

struct MmDims {
  size_t batch, n, k, m;
  bool batched_b;
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  MmDims d{};
  if (a.rank() == 2 && b.rank() == 2) {
    d = {1, a.dim(0), a.dim(1), b.dim(1), false};
    if (b.dim(0) != d.k) shape_fail("matmul", a, b);
  } else if (a.rank() == 3 && b.rank() == 2) {
    d = {a.dim(0), a.dim(1), a.dim(2), b.dim(1), false};
    if (b.dim(0) != d.k) shape_fail("matmul", a, b);
  } else if (a.rank() == 3 && b.rank() == 3) {
    d = {a.dim(0), a.dim(1), a.dim(2), b.dim(2), true};
    if (b.dim(0) != d.batch || b.dim(1) != d.k) shape_fail("matmul", a, b);
  } else {
    shape_fail("matmul", a, b);
  }

  std::vector<size_t> oshape = a.rank() == 2 ? std::vector<size_t>{d.n, d.m}
                                             : std::vector<size_t>{d.batch, d.n, d.m};
  std::vector<double> out(shape_numel(oshape), 0.0);
  for (size_t bi = 0; bi < d.batch; ++bi) {
    gemm_acc(a.data().data() + bi * d.n * d.k,
             b.data().data() + (d.batched_b ? bi * d.k * d.m : 0),
             out.data() + bi * d.n * d.m, d.n, d.k, d.m);
  }

  NodePtr an = a.handle(), bn = b.handle();
  return make_op(std::move(oshape), std::move(out), {a, b}, [an, bn, d](detail::Node& n) {
    for (size_t bi = 0; bi < d.batch; ++bi) {
      const double* g = n.grad.data() + bi * d.n * d.m;
      const double* av = an->data.data() + bi * d.n * d.k;
      const double* bv = bn->data.data() + (d.batched_b ? bi * d.k * d.m : 0);
      if (an->requires_grad)  // ga += g * b^T
        gemm_nt_acc(g, bv, grad_of(an) + bi * d.n * d.k, d.n, d.m, d.k);
      if (bn->requires_grad)  // gb += a^T * g
        gemm_tn_acc(av, g, grad_of(bn) + (d.batched_b ? bi * d.k * d.m : 0), d.n, d.k, d.m);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  MmDims d{};
  if (a.rank() == 2 && b.rank() == 2) {
    d = {1, a.dim(0), a.dim(1), b.dim(0), false};
    if (b.dim(1) != d.k) shape_fail("matmul_nt", a, b);
  } else if (a.rank() == 3 && b.rank() == 2) {
    d = {a.dim(0), a.dim(1), a.dim(2), b.dim(0), false};
    if (b.dim(1) != d.k) shape_fail("matmul_nt", a, b);
  } else if (a.rank() == 3 && b.rank() == 3) {
    d = {a.dim(0), a.dim(1), a.dim(2), b.dim(1), true};
    if (b.dim(0) != d.batch || b.dim(2) != d.k) shape_fail("matmul_nt", a, b);
  } else {
    shape_fail("matmul_nt", a, b);
  }

  std::vector<size_t> oshape = a.rank() == 2 ? std::vector<size_t>{d.n, d.m}
                                             : std::vector<size_t>{d.batch, d.n, d.m};
  std::vector<double> out(shape_numel(oshape), 0.0);
  for (size_t bi = 0; bi < d.batch; ++bi) {
    gemm_nt_acc(a.data().data() + bi * d.n * d.k,
                b.data().data() + (d.batched_b ? bi * d.m * d.k : 0),
                out.data() + bi * d.n * d.m, d.n, d.k, d.m);
  }

  NodePtr an = a.handle(), bn = b.handle();
  return make_op(std::move(oshape), std::move(out), {a, b}, [an, bn, d](detail::Node& n) {
    for (size_t bi = 0; bi < d.batch; ++bi) {
      const double* g = n.grad.data() + bi * d.n * d.m;
      const double* av = an->data.data() + bi * d.n * d.k;
      const double* bv = bn->data.data() + (d.batched_b ? bi * d.m * d.k : 0);
      if (an->requires_grad)  // ga += g * b
        gemm_acc(g, bv, grad_of(an) + bi * d.n * d.k, d.n, d.m, d.k);
      if (bn->requires_grad)  // gb += g^T * a
        gemm_tn_acc(g, av, grad_of(bn) + (d.batched_b ? bi * d.m * d.k : 0), d.n, d.m, d.k);
    }
  });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    shape_fail("matmul_tn", a, b);
  const size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(k * m, 0.0);
  gemm_tn_acc(a.data().data(), b.data().data(), out.data(), n, k, m);

  NodePtr an = a.handle(), bn = b.handle();
  return make_op({k, m}, std::move(out), {a, b}, [an, bn, n, k, m](detail::Node& nd) {
    if (an->requires_grad)  // ga += b * g^T
      gemm_nt_acc(bn->data.data(), nd.grad.data(), grad_of(an), n, m, k);
    if (bn->requires_grad)  // gb += a * g
      gemm_acc(an->data.data(), nd.grad.data(), grad_of(bn), n, k, m);
  });
}

// ----- shape & indexing -----

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  NodePtr an = a.handle();
  return make_op(std::move(shape), a.data(), {a}, [an](detail::Node& n) {
    if (!an->requires_grad) return;
    double* ga = grad_of(an);
    for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i];
  });
}

Tensor slice_last(const Tensor& a, size_t start, size_t len) {
  const size_t c = a.shape().back();
  if (start + len > c)
    throw ShapeError("slice_last: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of width " + std::to_string(c));
  const size_t rows = a.size() / c;
  std::vector<size_t> oshape = a.shape();
  oshape.back() = len;
  std::vector<double> out(rows * len);
  for (size_t r = 0; r < rows; ++r)
    std::copy_n(a.data().data() + r * c + start, len, out.data() + r * len);

  NodePtr an = a.handle();
  return make_op(std::move(oshape), std::move(out), {a},
                 [an, start, len, c, rows](detail::Node& n) {
                   double* ga = grad_of(an);
                   for (size_t r = 0; r < rows; ++r)
                     for (size_t j = 0; j < len; ++j)
                       ga[r * c + start + j] += n.grad[r * len + j];
                 });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no parts");
  size_t total = 0;
  for (const auto& p : parts) {
    total += p.shape().back();
    if (p.shape().size() != parts[0].shape().size()) shape_fail("concat_last", parts[0], p);
  }
  std::vector<size_t> oshape = parts[0].shape();
  oshape.back() = total;
  const size_t rows = parts[0].size() / parts[0].shape().back();
  std::vector<double> out(rows * total);
  size_t off = 0;
  for (const auto& p : parts) {
    const size_t w = p.shape().back();
    for (size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * w, w, out.data() + r * total + off);
    off += w;
  }

  auto node = new_node(std::move(oshape), std::move(out));
  bool track = false;
  if (g_grad_enabled)
    for (const auto& p : parts) track = track || p.requires_grad();
  if (track) {
    node->requires_grad = true;
    std::vector<NodePtr> handles;
    for (const auto& p : parts) {
      node->parents.push_back(p.handle());
      handles.push_back(p.handle());
    }
    node->backward = [handles, rows, total](detail::Node& n) {
      size_t off2 = 0;
      for (const auto& h : handles) {
        const size_t w = h->shape.back();
        if (h->requires_grad) {
          double* g = grad_of(h);
          for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < w; ++j) g[r * w + j] += n.grad[r * total + off2 + j];
        }
        off2 += w;
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

namespace {

// Common row geometry for gather/assemble on rank-2 or rank-3 tensors.
struct RowDims {
  size_t batch, rows, cols;
};

RowDims row_dims(const Tensor& a) {
  if (a.rank() == 2) return {1, a.dim(0), a.dim(1)};
  if (a.rank() == 3) return {a.dim(0), a.dim(1), a.dim(2)};
  throw ShapeError("expected rank 2 or 3, got " + shape_str(a.shape()));
}

}  // namespace

Tensor gather_rows(const Tensor& a, const std::vector<size_t>& idx) {
  const RowDims d = row_dims(a);
  for (size_t i : idx)
    if (i >= d.rows) throw ShapeError("gather_rows: index " + std::to_string(i) +
                                      " out of " + std::to_string(d.rows));
  std::vector<size_t> oshape = a.shape();
  oshape[a.rank() - 2] = idx.size();
  std::vector<double> out(d.batch * idx.size() * d.cols);
  for (size_t b = 0; b < d.batch; ++b)
    for (size_t r = 0; r < idx.size(); ++r)
      std::copy_n(a.data().data() + (b * d.rows + idx[r]) * d.cols, d.cols,
                  out.data() + (b * idx.size() + r) * d.cols);

  NodePtr an = a.handle();
  std::vector<size_t> idx_copy = idx;
  return make_op(std::move(oshape), std::move(out), {a},
                 [an, d, idx_copy](detail::Node& n) {
                   double* ga = grad_of(an);
                   for (size_t b = 0; b < d.batch; ++b)
                     for (size_t r = 0; r < idx_copy.size(); ++r) {
                       const double* g = n.grad.data() + (b * idx_copy.size() + r) * d.cols;
                       double* dst = ga + (b * d.rows + idx_copy[r]) * d.cols;
                       for (size_t c = 0; c < d.cols; ++c) dst[c] += g[c];
                     }
                 });
}

Tensor assemble_rows(const Tensor& visible, const std::vector<size_t>& visible_idx,
                     const Tensor& fill, const std::vector<size_t>& fill_idx) {
  if (visible.rank() != 3) throw ShapeError("assemble_rows: visible must be [B,V,C]");
  if (fill.rank() != 1 || fill.dim(0) != visible.dim(2)) shape_fail("assemble_rows", visible, fill);
  if (visible.dim(1) != visible_idx.size())
    throw ShapeError("assemble_rows: visible rows != index count");
  const size_t b = visible.dim(0), v = visible.dim(1), c = visible.dim(2);
  const size_t n = visible_idx.size() + fill_idx.size();
  std::vector<double> out(b * n * c);
  for (size_t bi = 0; bi < b; ++bi) {
    for (size_t r = 0; r < v; ++r)
      std::copy_n(visible.data().data() + (bi * v + r) * c, c,
                  out.data() + (bi * n + visible_idx[r]) * c);
    for (size_t fi : fill_idx)
      std::copy_n(fill.data().data(), c, out.data() + (bi * n + fi) * c);
  }

  NodePtr vn = visible.handle(), fn = fill.handle();
  std::vector<size_t> vis = visible_idx, msk = fill_idx;
  return make_op({b, n, c}, std::move(out), {visible, fill},
                 [vn, fn, vis, msk, b, v, c, n](detail::Node& nd) {
                   if (vn->requires_grad) {
                     double* gv = grad_of(vn);
                     for (size_t bi = 0; bi < b; ++bi)
                       for (size_t r = 0; r < v; ++r) {
                         const double* g = nd.grad.data() + (bi * n + vis[r]) * c;
                         double* dst = gv + (bi * v + r) * c;
                         for (size_t ci = 0; ci < c; ++ci) dst[ci] += g[ci];
                       }
                   }
                   if (fn->requires_grad) {
                     double* gf = grad_of(fn);
                     for (size_t bi = 0; bi < b; ++bi)
                       for (size_t fi : msk) {
                         const double* g = nd.grad.data() + (bi * n + fi) * c;
                         for (size_t ci = 0; ci < c; ++ci) gf[ci] += g[ci];
                       }
                   }
                 });
}

Tensor permute_flat(const Tensor& a, const std::vector<size_t>& perm,
                    std::vector<size_t> out_shape) {
  if (perm.size() != a.size() || shape_numel(out_shape) != a.size())
    throw ShapeError("permute_flat: size mismatch");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[perm[i]];
  NodePtr an = a.handle();
  std::vector<size_t> p = perm;
  return make_op(std::move(out_shape), std::move(out), {a}, [an, p](detail::Node& n) {
    double* ga = grad_of(an);
    for (size_t i = 0; i < n.size(); ++i) ga[p[i]] += n.grad[i];
  });
}

// ----- broadcasts -----

namespace {

Tensor lastdim_broadcast(const char* name, const Tensor& a, const Tensor& v, bool is_mul) {
  if (v.rank() != 1 || v.dim(0) != a.shape().back()) shape_fail(name, a, v);
  const size_t c = v.dim(0), rows = a.size() / c;
  std::vector<double> out(a.size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < c; ++j) {
      const double x = a.data()[r * c + j], y = v.data()[j];
      out[r * c + j] = is_mul ? x * y : x + y;
    }
  NodePtr an = a.handle(), vn = v.handle();
  return make_op(a.shape(), std::move(out), {a, v},
                 [an, vn, rows, c, is_mul](detail::Node& n) {
                   if (an->requires_grad) {
                     double* ga = grad_of(an);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < c; ++j)
                         ga[r * c + j] += n.grad[r * c + j] * (is_mul ? vn->data[j] : 1.0);
                   }
                   if (vn->requires_grad) {
                     double* gv = grad_of(vn);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < c; ++j)
                         gv[j] += n.grad[r * c + j] * (is_mul ? an->data[r * c + j] : 1.0);
                   }
                 });
}

}  // namespace

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) shape_fail("mul_scalar_t", a, s);
  const double sv = s.data()[0];
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
  NodePtr an = a.handle(), sn = s.handle();
  return make_op(a.shape(), std::move(out), {a, s}, [an, sn](detail::Node& n) {
    if (an->requires_grad) {
      double* ga = grad_of(an);
      for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i] * sn->data[0];
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (size_t i = 0; i < n.size(); ++i) acc += n.grad[i] * an->data[i];
      grad_of(sn)[0] += acc;
    }
  });
}

Tensor add_last_vec(const Tensor& a, const Tensor& v) {
  return lastdim_broadcast("add_last_vec", a, v, false);
}

Tensor mul_last_vec(const Tensor& a, const Tensor& v) {
  return lastdim_broadcast("mul_last_vec", a, v, true);
}

Tensor add_rowmat(const Tensor& a, const Tensor& m) {
  if (a.rank() != 3 || m.rank() != 2 || a.dim(1) != m.dim(0) || a.dim(2) != m.dim(1))
    shape_fail("add_rowmat", a, m);
  const size_t b = a.dim(0), nc = m.size();
  std::vector<double> out(a.size());
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t i = 0; i < nc; ++i) out[bi * nc + i] = a.data()[bi * nc + i] + m.data()[i];
  NodePtr an = a.handle(), mn = m.handle();
  return make_op(a.shape(), std::move(out), {a, m}, [an, mn, b, nc](detail::Node& n) {
    if (an->requires_grad) {
      double* ga = grad_of(an);
      for (size_t i = 0; i < n.size(); ++i) ga[i] += n.grad[i];
    }
    if (mn->requires_grad) {
      double* gm = grad_of(mn);
      for (size_t bi = 0; bi < b; ++bi)
        for (size_t i = 0; i < nc; ++i) gm[i] += n.grad[bi * nc + i];
    }
  });
}

Tensor mul_token_scalar(const Tensor& a, const Tensor& s) {
  if (a.rank() != 3 || s.rank() != 3 || s.dim(0) != a.dim(0) || s.dim(1) != a.dim(1) ||
      s.dim(2) != 1)
    shape_fail("mul_token_scalar", a, s);
  const size_t b = a.dim(0), nt = a.dim(1), c = a.dim(2);
  std::vector<double> out(a.size());
  for (size_t t = 0; t < b * nt; ++t)
    for (size_t j = 0; j < c; ++j) out[t * c + j] = a.data()[t * c + j] * s.data()[t];
  NodePtr an = a.handle(), sn = s.handle();
  return make_op(a.shape(), std::move(out), {a, s}, [an, sn, b, nt, c](detail::Node& n) {
    if (an->requires_grad) {
      double* ga = grad_of(an);
      for (size_t t = 0; t < b * nt; ++t)
        for (size_t j = 0; j < c; ++j) ga[t * c + j] += n.grad[t * c + j] * sn->data[t];
    }
    if (sn->requires_grad) {
      double* gs = grad_of(sn);
      for (size_t t = 0; t < b * nt; ++t) {
        double acc = 0.0;
        for (size_t j = 0; j < c; ++j) acc += n.grad[t * c + j] * an->data[t * c + j];
        gs[t] += acc;
      }
    }
  });
}

Tensor mul_batch_scalar(const Tensor& a, const Tensor& s) {
  if (a.rank() < 2 || s.rank() != 2 || s.dim(0) != a.dim(0) || s.dim(1) != 1)
    shape_fail("mul_batch_scalar", a, s);
  const size_t b = a.dim(0), per = a.size() / b;
  std::vector<double> out(a.size());
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t i = 0; i < per; ++i)
      out[bi * per + i] = a.data()[bi * per + i] * s.data()[bi];
  NodePtr an = a.handle(), sn = s.handle();
  return make_op(a.shape(), std::move(out), {a, s}, [an, sn, b, per](detail::Node& n) {
    if (an->requires_grad) {
      double* ga = grad_of(an);
      for (size_t bi = 0; bi < b; ++bi)
        for (size_t i = 0; i < per; ++i) ga[bi * per + i] += n.grad[bi * per + i] * sn->data[bi];
    }
    if (sn->requires_grad) {
      double* gs = grad_of(sn);
      for (size_t bi = 0; bi < b; ++bi) {
        double acc = 0.0;
        for (size_t i = 0; i < per; ++i) acc += n.grad[bi * per + i] * an->data[bi * per + i];
        gs[bi] += acc;
      }
    }
  });
}

// ----- reductions & normalization -----

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  NodePtr an = a.handle();
  return make_op({1}, {s}, {a}, [an](detail::Node& n) {
    double* ga = grad_of(an);
    for (size_t i = 0; i < an->data.size(); ++i) ga[i] += n.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  const RowDims d = row_dims(a);
  std::vector<size_t> oshape = a.rank() == 2 ? std::vector<size_t>{d.cols}
                                             : std::vector<size_t>{d.batch, d.cols};
  std::vector<double> out(d.batch * d.cols, 0.0);
  for (size_t b = 0; b < d.batch; ++b)
    for (size_t r = 0; r < d.rows; ++r)
      for (size_t c = 0; c < d.cols; ++c)
        out[b * d.cols + c] += a.data()[(b * d.rows + r) * d.cols + c];
  const double inv = 1.0 / static_cast<double>(d.rows);
  for (double& x : out) x *= inv;

  NodePtr an = a.handle();
  return make_op(std::move(oshape), std::move(out), {a}, [an, d, inv](detail::Node& n) {
    double* ga = grad_of(an);
    for (size_t b = 0; b < d.batch; ++b)
      for (size_t r = 0; r < d.rows; ++r)
        for (size_t c = 0; c < d.cols; ++c)
          ga[(b * d.rows + r) * d.cols + c] += n.grad[b * d.cols + c] * inv;
  });
}

Tensor softmax_last(const Tensor& a) {
  const size_t c = a.shape().back(), rows = a.size() / c;
  std::vector<double> out(a.size());
  for (size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * c;
    double* y = out.data() + r * c;
    double mx = x[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    const double inv = 1.0 / z;
    for (size_t j = 0; j < c; ++j) y[j] *= inv;
  }
  NodePtr an = a.handle();
  return make_op(a.shape(), std::move(out), {a}, [an, rows, c](detail::Node& n) {
    double* ga = grad_of(an);
    for (size_t r = 0; r < rows; ++r) {
      const double* y = n.data.data() + r * c;
      const double* g = n.grad.data() + r * c;
      double dot = 0.0;
      for (size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      for (size_t j = 0; j < c; ++j) ga[r * c + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const size_t c = a.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != c) shape_fail("layernorm", a, gain);
  if (bias.rank() != 1 || bias.dim(0) != c) shape_fail("layernorm", a, bias);
  const size_t rows = a.size() / c;
  std::vector<double> out(a.size());
  std::vector<double> xhat(a.size());
  std::vector<double> inv_sigma(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * c;
    double mu = 0.0;
    for (size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (x[j] - mu) * is;
      out[r * c + j] = xhat[r * c + j] * gain.data()[j] + bias.data()[j];
    }
  }
  NodePtr an = a.handle(), gn = gain.handle(), bn = bias.handle();
  auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
  auto isg = std::make_shared<std::vector<double>>(std::move(inv_sigma));
  return make_op(a.shape(), std::move(out), {a, gain, bias},
                 [an, gn, bn, xh, isg, rows, c](detail::Node& n) {
                   if (gn->requires_grad) {
                     double* gg = grad_of(gn);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < c; ++j)
                         gg[j] += n.grad[r * c + j] * (*xh)[r * c + j];
                   }
                   if (bn->requires_grad) {
                     double* gb = grad_of(bn);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < c; ++j) gb[j] += n.grad[r * c + j];
                   }
                   if (an->requires_grad) {
                     double* ga = grad_of(an);
                     for (size_t r = 0; r < rows; ++r) {
                       // dL/dxhat_j = g_j * gain_j; project out mean and the
                       // xhat component, then rescale by 1/sigma.
                       double m1 = 0.0, m2 = 0.0;
                       for (size_t j = 0; j < c; ++j) {
                         const double dxh = n.grad[r * c + j] * gn->data[j];
                         m1 += dxh;
                         m2 += dxh * (*xh)[r * c + j];
                       }
                       m1 /= static_cast<double>(c);
                       m2 /= static_cast<double>(c);
                       for (size_t j = 0; j < c; ++j) {
                         const double dxh = n.grad[r * c + j] * gn->data[j];
                         ga[r * c + j] +=
                             (dxh - m1 - (*xh)[r * c + j] * m2) * (*isg)[r];
                       }
                     }
                   }
                 });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_last_vec(matmul_nt(x, w), b);
}

// ----- Cholesky log-determinant -----

namespace linalg {

std::vector<double> cholesky(const std::vector<double>& a, size_t n, double jitter) {
  std::vector<double> l(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      // Symmetrize on read so A and A^T factor identically.
      double s = 0.5 * (a[i * n + j] + a[j * n + i]);
      if (i == j) s += jitter;
      for (size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(s > 0.0))
          throw NotPositiveDefiniteError(
              "cholesky: pivot " + std::to_string(i) + " not positive (value " +
                  std::to_string(s) + ") after jitter " + std::to_string(jitter),
              i);
        l[i * n + i] = std::sqrt(s);
      } else {
        l[i * n + j] = s / l[j * n + j];
      }
    }
  }
  return l;
}

double logdet_from_factor(const std::vector<double>& l, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::log(l[i * n + i]);
  return 2.0 * s;
}

std::vector<double> inverse_from_factor(const std::vector<double>& l, size_t n) {
  // Invert L by forward substitution, then A^-1 = L^-T L^-1.
  std::vector<double> linv(n * n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    linv[j * n + j] = 1.0 / l[j * n + j];
    for (size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (size_t k = j; k < i; ++k) s += l[i * n + k] * linv[k * n + j];
      linv[i * n + j] = -s / l[i * n + i];
    }
  }
  std::vector<double> inv(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (size_t k = i; k < n; ++k) s += linv[k * n + i] * linv[k * n + j];
      inv[i * n + j] = s;
      inv[j * n + i] = s;
    }
  return inv;
}

}  // namespace linalg

double default_jitter(const Tensor& m) {
  const size_t n = m.dim(0);
  double tr = 0.0;
  for (size_t i = 0; i < n; ++i) tr += m.data()[i * n + i];
  return 1e-6 * tr / static_cast<double>(n);
}

Tensor cholesky_logdet(const Tensor& m, double jitter) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1))
    throw ShapeError("cholesky_logdet: expected square matrix, got " + shape_str(m.shape()));
  if (jitter < 0.0) throw ConfigError("cholesky_logdet: jitter must be >= 0");
  const size_t n = m.dim(0);
  auto l = linalg::cholesky(m.data(), n, jitter);
  const double ld = linalg::logdet_from_factor(l, n);

  NodePtr mn = m.handle();
  auto lf = std::make_shared<std::vector<double>>(std::move(l));
  return make_op({1}, {ld}, {m}, [mn, lf, n](detail::Node& nd) {
    // d ln|A| / dA = A^-1 (already symmetric).
    auto inv = linalg::inverse_from_factor(*lf, n);
    double* gm = grad_of(mn);
    for (size_t i = 0; i < n * n; ++i) gm[i] += nd.grad[0] * inv[i];
  });
}

// ----- losses -----

namespace {

Tensor masked_loss(const char* name, const Tensor& pred, const Tensor& target,
                   const std::vector<double>& row_weights, bool squared) {
  if (pred.shape() != target.shape()) shape_fail(name, pred, target);
  if (pred.rank() != 3 || row_weights.size() != pred.dim(1))
    throw ShapeError(std::string(name) + ": expected pred [B,N,D] with N weights");
  const size_t b = pred.dim(0), nt = pred.dim(1), dd = pred.dim(2);
  double wsum = 0.0;
  for (double w : row_weights) wsum += w;
  if (wsum <= 0.0) throw ConfigError(std::string(name) + ": no rows selected");
  const double norm = 1.0 / (static_cast<double>(b) * wsum * static_cast<double>(dd));

  double loss = 0.0;
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t n = 0; n < nt; ++n) {
      const double w = row_weights[n];
      if (w == 0.0) continue;
      const double* p = pred.data().data() + (bi * nt + n) * dd;
      const double* t = target.data().data() + (bi * nt + n) * dd;
      for (size_t j = 0; j < dd; ++j) {
        const double diff = p[j] - t[j];
        loss += w * (squared ? diff * diff : std::abs(diff));
      }
    }
  loss *= norm;

  NodePtr pn = pred.handle(), tn = target.handle();
  std::vector<double> weights = row_weights;
  return make_op({1}, {loss}, {pred, target},
                 [pn, tn, weights, b, nt, dd, norm, squared](detail::Node& nd) {
                   const double g = nd.grad[0] * norm;
                   double* gp = pn->requires_grad ? grad_of(pn) : nullptr;
                   double* gt = tn->requires_grad ? grad_of(tn) : nullptr;
                   for (size_t bi = 0; bi < b; ++bi)
                     for (size_t n = 0; n < nt; ++n) {
                       const double w = weights[n];
                       if (w == 0.0) continue;
                       for (size_t j = 0; j < dd; ++j) {
                         const size_t k = (bi * nt + n) * dd + j;
                         const double diff = pn->data[k] - tn->data[k];
                         const double d =
                             squared ? 2.0 * diff : (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
                         if (gp) gp[k] += g * w * d;
                         if (gt) gt[k] -= g * w * d;
                       }
                     }
                 });
}

}  // namespace

Tensor masked_l1(const Tensor& pred, const Tensor& target,
                 const std::vector<double>& row_weights) {
  return masked_loss("masked_l1", pred, target, row_weights, false);
}

Tensor masked_l2(const Tensor& pred, const Tensor& target,
                 const std::vector<double>& row_weights) {
  return masked_loss("masked_l2", pred, target, row_weights, true);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  const size_t m = logits.dim(0), k = logits.dim(1);
  std::vector<double> probs(m * k);
  double loss = 0.0;
  for (size_t r = 0; r < m; ++r) {
    const double* x = logits.data().data() + r * k;
    double mx = x[0];
    for (size_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(x[j] - mx);
      z += probs[r * k + j];
    }
    for (size_t j = 0; j < k; ++j) probs[r * k + j] /= z;
    loss -= std::log(std::max(probs[r * k + labels[r]], 1e-300));
  }
  loss /= static_cast<double>(m);

  NodePtr ln = logits.handle();
  auto pr = std::make_shared<std::vector<double>>(std::move(probs));
  std::vector<int> lab = labels;
  return make_op({1}, {loss}, {logits}, [ln, pr, lab, m, k](detail::Node& nd) {
    double* g = grad_of(ln);
    const double s = nd.grad[0] / static_cast<double>(m);
    for (size_t r = 0; r < m; ++r)
      for (size_t j = 0; j < k; ++j)
        g[r * k + j] += s * ((*pr)[r * k + j] - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
  });
}

// ----- grad_check -----

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  if (eps < 1e-7 || eps > 1e-3)
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor y = f(x);
  if (!std::isfinite(y.value())) throw EvalError("grad_check: f(x) is not finite");
  backward(y);
  std::vector<double> autograd = x.grad();

  std::vector<double>& xd = x.raw_data();
  double worst = 0.0;
  for (size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + eps;
    const double fp = [&] {
      NoGradGuard ng;
      return f(x).value();
    }();
    xd[i] = orig - eps;
    const double fm = [&] {
      NoGradGuard ng;
      return f(x).value();
    }();
    xd[i] = orig;
    const double cd = (fp - fm) / (2.0 * eps);
    const double err = std::abs(autograd[i] - cd) / (std::abs(cd) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace c2e
