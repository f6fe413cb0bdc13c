// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/optimizer.hpp"

#include <cmath>

namespace c2e {

AdamW::AdamW(const ParamRegistry& params, const OptimizerConfig& cfg, size_t total_steps)
    : cfg_(cfg), total_steps_(total_steps) {
  for (const auto& [name, t] : params.items) {
    params_.push_back(t);
    names_.push_back(name);
    decay_.push_back(t.rank() >= 2);  // no decay on biases, norms, scalars
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

double AdamW::lr_at(size_t step_index) const {
  if (total_steps_ == 0) return cfg_.lr;
  const double warmup = cfg_.warmup_frac * static_cast<double>(total_steps_);
  const double s = static_cast<double>(step_index);
  if (warmup > 0.0 && s < warmup) return cfg_.lr * (s + 1.0) / warmup;
  const double progress =
      (s - warmup) / std::max(1.0, static_cast<double>(total_steps_) - warmup);
  return cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double AdamW::step(size_t step_index) {
  const double lr = lr_at(step_index);
  ++updates_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(updates_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(updates_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto& data = p.raw_data();
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const double wd = decay_[i] ? cfg_.weight_decay : 0.0;
    for (size_t k = 0; k < data.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      data[k] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + wd * data[k]);
    }
  }
  return lr;
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double AdamW::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace c2e
