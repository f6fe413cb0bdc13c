// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2e/config.hpp"
#include "c2e/layers.hpp"

namespace c2e {

// AdamW with decoupled weight decay on rank>=2 tensors and a linear-warmup
// cosine learning-rate schedule.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamRegistry& params, const OptimizerConfig& cfg, size_t total_steps);

  // Applies one update from the accumulated gradients; step_index is
  // zero-based. Returns the learning rate used.
  double step(size_t step_index);
  void zero_grad();

  // global L2 norm over all parameter gradients
  double grad_norm() const;

  size_t state_size() const { return m_.size(); }
  const std::vector<double>& first_moment(size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(size_t i) const { return v_[i]; }
  std::vector<double>& first_moment(size_t i) { return m_[i]; }
  std::vector<double>& second_moment(size_t i) { return v_[i]; }
  const std::string& param_name(size_t i) const { return names_[i]; }
  uint64_t update_count() const { return updates_; }
  void set_update_count(uint64_t n) { updates_ = n; }

  double lr_at(size_t step_index) const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::vector<bool> decay_;
  std::vector<std::vector<double>> m_, v_;
  OptimizerConfig cfg_;
  size_t total_steps_ = 0;
  uint64_t updates_ = 0;
};

}  // namespace c2e
