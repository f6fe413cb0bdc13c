// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "c2e/rng.hpp"
#include "c2e/tensor.hpp"

namespace c2e {

// Named view of all trainable tensors, in a fixed registration order shared
// by the optimizer and the checkpoint writer.
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }

  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return t;
    throw ConfigError("parameter not found: " + name);
  }
};

// Captured per-layer attention probabilities and entropy diagnostics.
struct ForwardTrace {
  // per encoder layer: heads * N * N row-major attention probabilities
  std::vector<std::vector<double>> enc_attention;
  size_t heads = 0;
  size_t tokens = 0;
};

namespace init {
inline Tensor normal(std::vector<size_t> shape, Rng& rng, double stddev = 0.02) {
  return Tensor::randn(std::move(shape), rng, stddev, true);
}
inline Tensor zeros(std::vector<size_t> shape) {
  return Tensor::zeros(std::move(shape), true);
}
inline Tensor ones(std::vector<size_t> shape) {
  Tensor t = Tensor::constant(std::move(shape), 1.0);
  t.set_requires_grad(true);
  return t;
}
inline Tensor identity(size_t n) {
  std::vector<double> d(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  Tensor t = Tensor::from_data({n, n}, std::move(d), true);
  return t;
}
}  // namespace init

struct LayerNorm {
  Tensor gain, bias;

  LayerNorm() = default;
  explicit LayerNorm(size_t width)
      : gain(init::ones({width})), bias(init::zeros({width})) {}

  Tensor forward(const Tensor& x) const { return layernorm(x, gain, bias); }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gain", gain);
    reg.add(prefix + ".bias", bias);
  }
};

struct MultiHeadAttention {
  size_t heads = 0, width = 0;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  MultiHeadAttention() = default;
  MultiHeadAttention(size_t heads_, size_t width_, Rng& rng)
      : heads(heads_),
        width(width_),
        wq(init::normal({width_, width_}, rng)),
        bq(init::zeros({width_})),
        wk(init::normal({width_, width_}, rng)),
        bk(init::zeros({width_})),
        wv(init::normal({width_, width_}, rng)),
        bv(init::zeros({width_})),
        wo(init::normal({width_, width_}, rng)),
        bo(init::zeros({width_})) {
    if (width_ % heads_ != 0)
      throw ConfigError("attention width " + std::to_string(width_) +
                        " not divisible by " + std::to_string(heads_) + " heads");
  }

  // x: [B,N,C]. When attn_out is non-null the per-head probabilities
  // (averaged over the batch) are appended as one heads*N*N block.
  Tensor forward(const Tensor& x, std::vector<double>* attn_out = nullptr) const;

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".wq", wq);
    reg.add(prefix + ".bq", bq);
    reg.add(prefix + ".wk", wk);
    reg.add(prefix + ".bk", bk);
    reg.add(prefix + ".wv", wv);
    reg.add(prefix + ".bv", bv);
    reg.add(prefix + ".wo", wo);
    reg.add(prefix + ".bo", bo);
  }
};

// Standard transformer feed-forward, used by the plain-ViT baseline.
struct Mlp {
  Tensor w1, b1, w2, b2;

  Mlp() = default;
  Mlp(size_t width, size_t hidden, Rng& rng)
      : w1(init::normal({hidden, width}, rng)),
        b1(init::zeros({hidden})),
        w2(init::normal({width, hidden}, rng)),
        b2(init::zeros({width})) {}

  Tensor forward(const Tensor& x) const {
    return linear(gelu_t(linear(x, w1, b1)), w2, b2);
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".w1", w1);
    reg.add(prefix + ".b1", b1);
    reg.add(prefix + ".w2", w2);
    reg.add(prefix + ".b2", b2);
  }
};

}  // namespace c2e
