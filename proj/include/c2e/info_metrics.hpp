// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian entropy over token covariances, the entropy-difference compression
// objective, its closed-form gradient, and the probes used to exercise the
// log-determinant concavity and subspace-split properties.
#pragma once

#include <utility>
#include <vector>

#include "c2e/tensor.hpp"

namespace c2e {

struct EntropyReport {
  double entropy = 0.0;       // nats
  double logdet_sigma = 0.0;  // nats
  size_t dim = 0;             // M, channel count
  double jitter_used = 0.0;
};

// (1/N) * zbar^T zbar with per-channel means removed. Differentiable.
// z is one layer's token matrix [N,C]; throws on N == 0.
Tensor covariance(const Tensor& z);

// H = 0.5 ln|Sigma + jitter I| + (C/2)(1 + ln 2pi).
// jitter < 0 selects the trace-scaled default.
EntropyReport gaussian_entropy(const Tensor& z, double jitter = -1.0);

// -0.5 ln|Sigma_Z + jitter I|; the constant input-entropy and dimension
// terms are dropped since they do not move under the parameters.
double compression_objective(const Tensor& z, double jitter = -1.0);

// -z (z^T z + jitter I)^-1, the closed-form descent direction on the
// negative entropy. This is the oracle the learned encoder step is
// sanity-compared against; expects (near) mean-zero z.
Tensor exact_entropy_gradient(const Tensor& z, double jitter = -1.0);

// True iff ln|(a+b)/2| >= (ln|a| + ln|b|)/2 - 1e-9 for symmetric PD inputs.
bool concavity_probe(const Tensor& a, const Tensor& b);

// total = ln|z^T z + jitter I|;
// split_sum = sum over partition blocks of ln|Gram restricted to block|.
// partition must be a disjoint cover of 0..C-1.
std::pair<double, double> subspace_split_logdet(
    const Tensor& z, const std::vector<std::vector<size_t>>& partition,
    double jitter = -1.0);

}  // namespace c2e
