// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "c2e/checkpoint.hpp"
#include "c2e/image_io.hpp"

namespace c2e {

struct MetricsRow {
  uint64_t step = 0;
  double loss = 0.0;
  std::vector<double> layer_entropy;  // H_0..H_{depth-1}
  double kt_mean = 0.0;
  double grad_norm = 0.0;
  double ms = 0.0;  // wall time of the step; excluded from determinism checks
};

// Fixed header: step,loss,H_0..H_{n-1},kT_mean,grad_norm,ms
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       size_t depth);

struct TrainResult {
  std::vector<MetricsRow> rows;
  double initial_loss = 0.0;  // step-0 batch loss
  double final_loss = 0.0;    // last-step batch loss
  uint64_t final_step = 0;
};

TrainState fresh_train_state(const C2EConfig& cfg);

// Runs from state.step until cfg.steps (at most max_new_steps of them);
// batch selection, masking, and Langevin noise streams are pure functions
// of (seed, step), so a resumed run reproduces an uninterrupted one bit for
// bit. Throws DivergenceError with the step and entropy trail on a
// non-finite loss.
TrainResult train_loop(TrainState& state, const ImageDataset& data,
                       size_t max_new_steps = static_cast<size_t>(-1));

}  // namespace c2e
