// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// The exploration decoder: mask-token insertion, a per-token energy network
// with temperature predicted from part of Z0, Langevin updates, and the
// width-restoring inverse projections back up to pixel patches.
#pragma once

#include <vector>

#include "c2e/config.hpp"
#include "c2e/encoder.hpp"
#include "c2e/layers.hpp"
#include "c2e/rng.hpp"
#include "c2e/tensor.hpp"

namespace c2e {

struct EnergyContext {
  Tensor h;   // [B, C_h] hidden temperature state
  Tensor kT;  // [B, 1], strictly positive (softplus + 1e-4 floor)
  double conditional_ratio = 0.0;
  size_t cond_channels = 0;  // ceil(ratio * C0)
  std::vector<Tensor> layer_energies;  // E(z) per decoder layer, [B,N,1]
};

// kT depends on exactly the first ceil(ratio*C0) channels of Z0.
struct TemperatureHead {
  size_t cond_channels = 0;
  Tensor wh, bh;  // [C_h, cond] / [C_h]
  Tensor wt, bt;  // [1, C_h] / [1]

  TemperatureHead() = default;
  TemperatureHead(size_t latent_width, double conditional_ratio, size_t hidden, Rng& rng);

  EnergyContext forward(const Tensor& z0, double conditional_ratio) const;

  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// One Langevin update with analytic drift and optional injected noise:
//   z - (eps/kT) * E(z) * grad_E(z) + sqrt(2 eps) * omega.
// energies [B,N,1] and energy_grad [B,N,C] come from the caller so analytic
// energy functions can be tested against the learned network.
Tensor langevin_update(const Tensor& z, const Tensor& energies, const Tensor& energy_grad,
                       const Tensor& kT, double eps, Rng& rng, bool noise_on);

struct ExplorationBlock {
  size_t width = 0, out_width = 0;
  double eps = 0.0;
  LayerNorm ln;
  MultiHeadAttention attn;
  // Two-layer scalar-per-token energy network.
  Tensor e_w1, e_b1;  // [H_e, C] / [H_e]
  Tensor e_w2, e_b2;  // [1, H_e] / [1]
  Tensor widen_map;   // [C+delta, C], identity-padded at init
  Tensor pinv_map;    // [C+delta, C+delta] residual bypass, zero at init
  bool baseline = false;
  LayerNorm ln2;
  Mlp mlp;

  ExplorationBlock() = default;
  ExplorationBlock(size_t width_, size_t delta, size_t heads, size_t energy_hidden,
                   double eps_, Rng& rng, bool baseline_vit, double mlp_ratio);

  Tensor energy(const Tensor& z) const;  // [B,N,1]
  // Closed-form grad of the energy net w.r.t. its input, expressed through
  // differentiable primitives so training gradients flow through it.
  Tensor energy_input_grad(const Tensor& z) const;  // [B,N,C]

  // attention -> Langevin step -> inverse projection
  Tensor langevin_step(const Tensor& z, const EnergyContext& ctx, Rng& rng,
                       bool noise_on, long layer_index) const;
  Tensor inverse_project(const Tensor& z_half) const;
  Tensor forward(const Tensor& x, EnergyContext& ctx, Rng& rng, bool noise_on,
                 long layer_index) const;

  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const C2EConfig& cfg, Rng& rng);

  // Insert mask tokens, run every block, project to pixel patches.
  // Temperature is computed once from Z0 and shared by all layers.
  Tensor decode(const LatentState& z0, const MaskPlan& plan, Rng& rng, bool noise_on,
                EnergyContext* ctx_out = nullptr) const;

  const std::vector<ExplorationBlock>& blocks() const { return blocks_; }
  const TemperatureHead& temperature_head() const { return temp_; }
  void register_params(ParamRegistry& reg) const;

 private:
  size_t token_count_ = 0;
  double conditional_ratio_ = 0.0;
  TemperatureHead temp_;
  Tensor mask_token;  // [C0]
  Tensor dec_pos;     // [N, C0]
  std::vector<ExplorationBlock> blocks_;
  LayerNorm final_ln_;    // pre-head normalization
  Tensor head_w, head_b;  // [patch_dim, C_top]
};

// Mean absolute (or squared) error over masked patches only, against
// per-patch mean-0/var-1 normalized targets.
Tensor reconstruction_loss(const Tensor& pred, const Tensor& target_patches,
                           const MaskPlan& plan, const std::string& kind = "l1");

}  // namespace c2e
