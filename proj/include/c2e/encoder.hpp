// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// The compression encoder: patch embedding, random masking, attention blocks
// augmented with a learned entropy-descent step, and per-block channel
// reduction with a residual subspace projection.
#pragma once

#include <vector>

#include "c2e/config.hpp"
#include "c2e/info_metrics.hpp"
#include "c2e/layers.hpp"
#include "c2e/rng.hpp"
#include "c2e/tensor.hpp"

namespace c2e {

struct PatchBatch {
  Tensor tokens;  // [B, N, patch*patch*3], raw pixel values
  size_t image_size = 0;
  size_t patch_size = 0;
  size_t grid = 0;
  std::vector<std::pair<size_t, size_t>> positions;  // (row, col) per token
};

// Non-overlapping patch decomposition of [B,H,W,3] images; invertible.
PatchBatch patchify(const Tensor& images, size_t patch);
Tensor unpatchify(const Tensor& tokens, size_t image_size, size_t patch);

struct MaskPlan {
  double ratio = 0.0;
  uint64_t seed = 0;
  std::vector<size_t> visible;  // sorted
  std::vector<size_t> masked;   // sorted
};

// Uniform subset without replacement of size floor(ratio*n); deterministic
// in the rng's (seed, position).
MaskPlan plan_mask(size_t n, double ratio, Rng& rng);

// Latent Z0 plus the per-layer entropy trail recorded on the way down.
struct LatentState {
  Tensor tokens;  // [B, V, C0]
  std::vector<EntropyReport> layer_entropy;
  std::vector<size_t> widths;  // input width per block, then C0
};

struct EncoderBlock {
  size_t in_width = 0, out_width = 0;
  LayerNorm ln;
  MultiHeadAttention attn;
  // Learned linear operators standing in for the analytic entropy-descent
  // direction; identity-initialized so the step starts as pure shrinkage.
  Tensor d_map, vinv_map, s_map;  // [C,C] each
  Tensor raw_beta;                // step size through softplus, > 0
  Tensor p_map;                   // [C-delta, C-delta] residual projection
  // Baseline mode replaces the compression step with a standard MLP.
  bool baseline = false;
  LayerNorm ln2;
  Mlp mlp;

  EncoderBlock() = default;
  EncoderBlock(size_t width, size_t delta, size_t heads, double beta_init, Rng& rng,
               bool baseline_vit, double mlp_ratio);

  double step_size() const;  // softplus(raw_beta)

  // z - softplus(beta) * S(Vinv(D(z)))
  Tensor compression_step(const Tensor& z) const;
  // Truncate trailing channels, then add the learned projection of the
  // truncated state (the residual bypass at reduced width).
  Tensor subspace_project(const Tensor& z_half) const;

  Tensor forward(const Tensor& x, std::vector<double>* attn_out = nullptr) const;

  void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const C2EConfig& cfg, Rng& rng);

  // Visible tokens only (masked-autoencoder rule). Records one entropy
  // report per block on the post-block latent.
  LatentState encode(const PatchBatch& batch, const MaskPlan& plan,
                     ForwardTrace* trace = nullptr) const;

  const ChannelSchedule& schedule() const { return schedule_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }
  void register_params(ParamRegistry& reg) const;

 private:
  ChannelSchedule schedule_;
  size_t token_count_ = 0;
  double jitter_ = -1.0;
  Tensor embed_w, embed_b;  // [C_top, patch_dim]
  Tensor pos_embed;         // [N, C_top]
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_ln_;  // the latent normalization layer (Z0 mean zero)
};

}  // namespace c2e
