// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, kept independent of the library's
// computation paths on purpose.
#pragma once

#include <cstdint>
#include <vector>

#include "c2e/rng.hpp"
#include "c2e/tensor.hpp"

namespace oracle {

// Determinant by cofactor expansion along the first row; exponential cost,
// fine for n <= 6.
inline double cofactor_det(const std::vector<double>& m, size_t n) {
  if (n == 1) return m[0];
  if (n == 2) return m[0] * m[3] - m[1] * m[2];
  double det = 0.0;
  std::vector<double> minor((n - 1) * (n - 1));
  for (size_t j = 0; j < n; ++j) {
    for (size_t r = 1; r < n; ++r) {
      size_t mc = 0;
      for (size_t c = 0; c < n; ++c) {
        if (c == j) continue;
        minor[(r - 1) * (n - 1) + mc++] = m[r * n + c];
      }
    }
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    det += sign * m[j] * cofactor_det(minor, n - 1);
  }
  return det;
}

// Textbook two-pass covariance of z [N,C]: means first, then outer products.
inline std::vector<double> two_pass_covariance(const std::vector<double>& z,
                                               size_t n, size_t c) {
  std::vector<double> mean(c, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < c; ++j) mean[j] += z[i * c + j];
  for (size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
  std::vector<double> cov(c * c, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t a = 0; a < c; ++a)
      for (size_t b = 0; b < c; ++b)
        cov[a * c + b] += (z[i * c + a] - mean[a]) * (z[i * c + b] - mean[b]);
  for (double& x : cov) x /= static_cast<double>(n);
  return cov;
}

inline uint64_t fnv1a(const void* bytes, size_t len, uint64_t h = 0xCBF29CE484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline c2e::Tensor random_tensor(std::vector<size_t> shape, c2e::Rng& rng,
                                 double scale = 1.0) {
  return c2e::Tensor::randn(std::move(shape), rng, scale);
}

// Random symmetric positive definite matrix a^T a + ridge * I.
inline c2e::Tensor random_spd(size_t n, c2e::Rng& rng, double ridge = 0.5) {
  c2e::Tensor a = c2e::Tensor::randn({n, n}, rng);
  std::vector<double> m(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < n; ++k) s += a.data()[k * n + i] * a.data()[k * n + j];
      m[i * n + j] = s + (i == j ? ridge : 0.0);
    }
  return c2e::Tensor::from_data({n, n}, std::move(m));
}

}  // namespace oracle
