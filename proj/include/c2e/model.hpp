// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "c2e/config.hpp"
#include "c2e/decoder.hpp"
#include "c2e/encoder.hpp"

namespace c2e {

// Full masked-reconstruction model: compression encoder + exploration decoder.
class C2EModel {
 public:
  C2EModel() = default;
  explicit C2EModel(const C2EConfig& cfg)
      : C2EModel(cfg, Rng(cfg.seed).derive(0x1417)) {}
  C2EModel(const C2EConfig& cfg, Rng init_rng);

  struct StepResult {
    Tensor loss;          // scalar, graph-attached
    Tensor pred;          // [B,N,patch_dim]
    LatentState latent;   // Z0 + per-layer entropy
    EnergyContext ctx;    // temperature and per-layer energies
  };

  // Masked forward pass plus reconstruction loss against the input images.
  StepResult forward_loss(const Tensor& images, const MaskPlan& plan, Rng& noise_rng,
                          bool noise_on, ForwardTrace* trace = nullptr) const;

  // Encode with every token visible (feature-extraction mode).
  LatentState encode_all(const Tensor& images, ForwardTrace* trace = nullptr) const;

  const C2EConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return enc_; }
  const Decoder& decoder() const { return dec_; }
  ParamRegistry params() const;

 private:
  C2EConfig cfg_;
  Encoder enc_;
  Decoder dec_;
};

}  // namespace c2e
