// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2e/errors.hpp"

namespace c2e {

// Strictly decreasing per-layer channel widths: top, top-delta, ...,
// top-depth*delta. widths()[i] is the input width of encoder block i;
// widths().back() is C0, the latent width.
struct ChannelSchedule {
  size_t top = 64;
  size_t delta = 8;
  size_t depth = 4;

  std::vector<size_t> widths() const {
    std::vector<size_t> w(depth + 1);
    for (size_t i = 0; i <= depth; ++i) w[i] = top - i * delta;
    return w;
  }
  size_t latent_width() const { return top - depth * delta; }

  void validate() const {
    if (depth == 0) throw ConfigError("schedule: depth must be >= 1");
    if (top <= depth * delta)
      throw ConfigError("schedule: width underflow, top " + std::to_string(top) +
                        " cannot drop by " + std::to_string(delta) + " over " +
                        std::to_string(depth) + " blocks");
  }
};

struct OptimizerConfig {
  double lr = 1e-2;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.1;  // fraction of steps with linear warmup
};

struct C2EConfig {
  size_t image_size = 32;
  size_t patch_size = 8;
  double mask_ratio = 0.75;
  size_t depth = 4;
  size_t channel_top = 64;
  size_t channel_delta = 8;
  size_t heads = 4;
  double beta_step_init = 0.1;     // compression step size (learnable)
  double conditional_ratio = 0.25; // fraction of Z0 channels feeding kT
  double epsilon = 1e-3;           // Langevin step size
  bool noise = true;               // Langevin noise during training
  std::string loss = "l1";         // "l1" | "l2"
  size_t temp_hidden = 16;
  size_t energy_hidden = 32;
  bool baseline_vit = false;       // swap compression/Langevin for MLP sublayers
  double mlp_ratio = 4.0;          // baseline MLP hidden multiple
  OptimizerConfig optimizer;
  size_t steps = 200;
  size_t batch_size = 16;
  uint64_t seed = 42;
  double jitter = -1.0;            // <0: trace-scaled automatic
  size_t log_every = 10;
  size_t ckpt_every = 0;           // 0: only final

  size_t grid() const { return image_size / patch_size; }
  size_t token_count() const { return grid() * grid(); }
  size_t patch_dim() const { return patch_size * patch_size * 3; }
  ChannelSchedule schedule() const { return {channel_top, channel_delta, depth}; }

  void validate() const;

  std::string to_json() const;
  static C2EConfig from_json(const std::string& text);
  static C2EConfig load(const std::string& path);
  void save(const std::string& path) const;

  // FNV-1a over the canonical JSON dump, for provenance lines.
  uint64_t hash() const;
};

}  // namespace c2e
