// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/info_metrics.hpp"

#include <cmath>
#include <numeric>

namespace c2e {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Gram = z^T z + jitter I as raw buffers, with trace-scaled default jitter.
std::vector<double> gram_with_jitter(const Tensor& z, double& jitter) {
  const size_t n = z.dim(0), c = z.dim(1);
  std::vector<double> g(c * c, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t a = 0; a < c; ++a) {
      const double za = z.data()[i * c + a];
      if (za == 0.0) continue;
      for (size_t b = 0; b < c; ++b) g[a * c + b] += za * z.data()[i * c + b];
    }
  if (jitter < 0.0) {
    double tr = 0.0;
    for (size_t a = 0; a < c; ++a) tr += g[a * c + a];
    jitter = 1e-6 * tr / static_cast<double>(c);
  }
  for (size_t a = 0; a < c; ++a) g[a * c + a] += jitter;
  return g;
}

}  // namespace

Tensor covariance(const Tensor& z) {
  if (z.rank() != 2) throw ShapeError("covariance: expected [N,C] token matrix");
  const size_t n = z.dim(0);
  if (n == 0) throw ConfigError("covariance: empty input (N == 0)");
  Tensor mean = mean_rows(z);                       // [C]
  Tensor centered = add_last_vec(z, neg(mean));     // broadcast subtract
  return mul_scalar(matmul_tn(centered, centered), 1.0 / static_cast<double>(n));
}

EntropyReport gaussian_entropy(const Tensor& z, double jitter) {
  NoGradGuard ng;
  Tensor sigma = covariance(z);
  const double j = jitter < 0.0 ? default_jitter(sigma) : jitter;
  const double logdet = cholesky_logdet(sigma, j).value();
  const size_t c = z.dim(1);
  EntropyReport r;
  r.logdet_sigma = logdet;
  r.dim = c;
  r.jitter_used = j;
  r.entropy = 0.5 * logdet + 0.5 * static_cast<double>(c) * (1.0 + kLog2Pi);
  return r;
}

double compression_objective(const Tensor& z, double jitter) {
  NoGradGuard ng;
  Tensor sigma = covariance(z);
  const double j = jitter < 0.0 ? default_jitter(sigma) : jitter;
  return -0.5 * cholesky_logdet(sigma, j).value();
}

Tensor exact_entropy_gradient(const Tensor& z, double jitter) {
  if (z.rank() != 2) throw ShapeError("exact_entropy_gradient: expected [N,C]");
  const size_t n = z.dim(0), c = z.dim(1);
  double j = jitter;
  auto gram = gram_with_jitter(z, j);
  auto l = linalg::cholesky(gram, c, 0.0);
  auto inv = linalg::inverse_from_factor(l, c);
  std::vector<double> out(n * c, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t b = 0; b < c; ++b) {
      double s = 0.0;
      for (size_t a = 0; a < c; ++a) s += z.data()[i * c + a] * inv[a * c + b];
      out[i * c + b] = -s;
    }
  return Tensor::from_data({n, c}, std::move(out));
}

bool concavity_probe(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1) || a.shape() != b.shape())
    throw ShapeError("concavity_probe: expected equal square matrices");
  const size_t n = a.dim(0);
  std::vector<double> mid(n * n);
  for (size_t i = 0; i < n * n; ++i) mid[i] = 0.5 * (a.data()[i] + b.data()[i]);
  NoGradGuard ng;
  const double lm = cholesky_logdet(Tensor::from_data({n, n}, mid), 0.0).value();
  const double la = cholesky_logdet(a, 0.0).value();
  const double lb = cholesky_logdet(b, 0.0).value();
  return lm >= 0.5 * (la + lb) - 1e-9;
}

std::pair<double, double> subspace_split_logdet(
    const Tensor& z, const std::vector<std::vector<size_t>>& partition, double jitter) {
  if (z.rank() != 2) throw ShapeError("subspace_split_logdet: expected [N,C]");
  const size_t c = z.dim(1);
  std::vector<int> seen(c, 0);
  for (const auto& block : partition)
    for (size_t ch : block) {
      if (ch >= c) throw PartitionError("partition: channel " + std::to_string(ch) +
                                        " out of width " + std::to_string(c));
      if (seen[ch]++) throw PartitionError("partition: channel " + std::to_string(ch) +
                                           " appears twice");
    }
  for (size_t ch = 0; ch < c; ++ch)
    if (!seen[ch]) throw PartitionError("partition: channel " + std::to_string(ch) +
                                        " not covered");

  double j = jitter;
  auto gram = gram_with_jitter(z, j);  // includes jitter on the diagonal
  auto l = linalg::cholesky(gram, c, 0.0);
  const double total = linalg::logdet_from_factor(l, c);

  double split_sum = 0.0;
  for (const auto& block : partition) {
    const size_t k = block.size();
    if (k == 0) continue;
    std::vector<double> sub(k * k);
    for (size_t i = 0; i < k; ++i)
      for (size_t jj = 0; jj < k; ++jj) sub[i * k + jj] = gram[block[i] * c + block[jj]];
    auto lsub = linalg::cholesky(sub, k, 0.0);
    split_sum += linalg::logdet_from_factor(lsub, k);
  }
  return {total, split_sum};
}

}  // namespace c2e
