// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with reverse-mode automatic differentiation.
// Each op builds a node holding its forward result plus a backward closure;
// backward(root) runs the closures in reverse topological order. Tensors are
// immutable once they participate in a graph, except through the optimizer's
// raw_data() entry point.
#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "c2e/errors.hpp"
#include "c2e/rng.hpp"

namespace c2e {

namespace detail {

struct Node {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor constant(std::vector<size_t> shape, double value);
  static Tensor from_data(std::vector<size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const { return node_->shape; }
  size_t size() const { return node_->data.size(); }
  size_t rank() const { return node_->shape.size(); }
  size_t dim(size_t i) const { return node_->shape[i]; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  const std::vector<double>& data() const { return node_->data; }
  // In-place access for initialization and optimizer updates only; never
  // call on a tensor that already feeds a live graph.
  std::vector<double>& raw_data() { return node_->data; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& raw_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
  }

  double value() const;  // scalar tensors only
  double at(std::initializer_list<size_t> idx) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording for its scope (metrics, data prep, inference).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Reverse-mode sweep from a scalar root. Gradients accumulate; call
// zero_grad on leaves between steps.
void backward(const Tensor& root);

// ----- elementwise -----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor softplus_t(const Tensor& a);
Tensor gelu_t(const Tensor& a);
Tensor reciprocal_t(const Tensor& a);

// ----- matmul family -----
// matmul:    [N,K]x[K,M], [B,N,K]x[K,M], [B,N,K]x[B,K,M]
// matmul_nt: a * b^T with b transposed on its last two dims (shared or batched)
// matmul_tn: a^T * b for rank-2 operands (Gram matrices)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// ----- shape & indexing -----
Tensor reshape(const Tensor& a, std::vector<size_t> shape);
Tensor slice_last(const Tensor& a, size_t start, size_t len);
Tensor concat_last(const std::vector<Tensor>& parts);
// Select rows (dim -2) by index; rank 2 or 3 input.
Tensor gather_rows(const Tensor& a, const std::vector<size_t>& idx);
// Build [B,N,C] from visible tokens and a broadcast fill vector at the
// remaining positions (mask-token insertion).
Tensor assemble_rows(const Tensor& visible, const std::vector<size_t>& visible_idx,
                     const Tensor& fill, const std::vector<size_t>& fill_idx);
// out[i] = a.flat[perm[i]]; perm must be a bijection (patch re-layouts).
Tensor permute_flat(const Tensor& a, const std::vector<size_t>& perm,
                    std::vector<size_t> out_shape);

// ----- broadcasts -----
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);   // s: 1-element tensor
Tensor add_last_vec(const Tensor& a, const Tensor& v);   // v: [C] over last dim
Tensor mul_last_vec(const Tensor& a, const Tensor& v);   // v: [C] over last dim
Tensor add_rowmat(const Tensor& a, const Tensor& m);     // a:[B,N,C] m:[N,C]
Tensor mul_token_scalar(const Tensor& a, const Tensor& s);  // a:[B,N,C] s:[B,N,1]
Tensor mul_batch_scalar(const Tensor& a, const Tensor& s);  // a:[B,...] s:[B,1]

// ----- reductions & normalization -----
Tensor sum_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // mean over dim -2: [B,N,C]->[B,C], [N,C]->[C]
Tensor softmax_last(const Tensor& a);
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-6);

// x*W^T + b with W stored [out,in].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ----- matrix spectral -----
// ln|sym(m) + jitter*I| via Cholesky; differentiable w.r.t. m.
Tensor cholesky_logdet(const Tensor& m, double jitter);
// 1e-6 * trace(m)/dim, the default regularization for near-singular Grams.
double default_jitter(const Tensor& m);

// ----- losses -----
// Mean absolute / squared error over rows with weight[n] != 0; weights has
// length N for pred [B,N,D] (one mask plan shared across the batch).
Tensor masked_l1(const Tensor& pred, const Tensor& target,
                 const std::vector<double>& row_weights);
Tensor masked_l2(const Tensor& pred, const Tensor& target,
                 const std::vector<double>& row_weights);
// Mean softmax cross-entropy of logits [M,K] against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ----- verification -----
// Max over elements of |autodiff - central difference| / (|cd| + 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps);

namespace linalg {
// Cholesky of sym(a) + jitter*I for an n x n row-major buffer. Returns the
// lower factor; throws NotPositiveDefiniteError with the failing pivot.
std::vector<double> cholesky(const std::vector<double>& a, size_t n, double jitter);
double logdet_from_factor(const std::vector<double>& l, size_t n);
// Inverse of the factored matrix from its Cholesky factor.
std::vector<double> inverse_from_factor(const std::vector<double>& l, size_t n);
}  // namespace linalg

}  // namespace c2e
