// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace c2e {

namespace {

// stream tags for the per-purpose rng forks
constexpr uint64_t kBatchStream = 0xBA7C;
constexpr uint64_t kMaskStream = 0x3A5C;
constexpr uint64_t kNoiseStream = 0x401E;

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       size_t depth) {
  std::ofstream out(path);
  if (!out) throw IoError("metrics: cannot write " + path);
  out << "step,loss";
  for (size_t i = 0; i < depth; ++i) out << ",H_" << i;
  out << ",kT_mean,grad_norm,ms\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.step << "," << r.loss;
    for (double h : r.layer_entropy) out << "," << h;
    out << "," << r.kt_mean << "," << r.grad_norm << "," << r.ms << "\n";
  }
}

TrainState fresh_train_state(const C2EConfig& cfg) {
  cfg.validate();
  TrainState state{cfg, C2EModel(cfg), AdamW(), 0, cfg.seed, 0};
  state.opt = AdamW(state.model.params(), cfg.optimizer, cfg.steps);
  return state;
}

TrainResult train_loop(TrainState& state, const ImageDataset& data,
                       size_t max_new_steps) {
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  const C2EConfig& cfg = state.cfg;
  const Rng base(state.rng_seed);

  TrainResult result;
  result.initial_loss = std::nan("");
  uint64_t until = cfg.steps;
  if (max_new_steps != static_cast<size_t>(-1))
    until = std::min<uint64_t>(until, state.step + max_new_steps);

  for (uint64_t step = state.step; step < until; ++step) {
    const auto t0 = std::chrono::steady_clock::now();

    Rng batch_rng = base.derive(kBatchStream).derive(step);
    std::vector<size_t> idx(cfg.batch_size);
    for (auto& i : idx) i = batch_rng.uniform_below(data.size());
    Tensor images = images_to_tensor(data.images, idx);

    Rng mask_rng = base.derive(kMaskStream).derive(step);
    MaskPlan plan = plan_mask(cfg.token_count(), cfg.mask_ratio, mask_rng);

    Rng noise_rng = base.derive(kNoiseStream).derive(step);
    auto out = state.model.forward_loss(images, plan, noise_rng, cfg.noise);
    const double loss = out.loss.value();

    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << "; layer entropies:";
      for (const auto& rep : out.latent.layer_entropy) msg << " " << rep.entropy;
      throw DivergenceError(msg.str(), -1, static_cast<long>(step));
    }
    for (const auto& rep : out.latent.layer_entropy)
      if (!std::isfinite(rep.entropy))
        throw DivergenceError("train: non-finite layer entropy at step " +
                                  std::to_string(step),
                              -1, static_cast<long>(step));

    state.opt.zero_grad();
    backward(out.loss);
    state.opt.step(step);

    const auto t1 = std::chrono::steady_clock::now();
    if (step == 0) result.initial_loss = loss;
    result.final_loss = loss;
    result.final_step = step + 1;

    if (step % cfg.log_every == 0 || step + 1 == until) {
      MetricsRow row;
      row.step = step;
      row.loss = loss;
      for (const auto& rep : out.latent.layer_entropy)
        row.layer_entropy.push_back(rep.entropy);
      double kt = 0.0;
      for (double v : out.ctx.kT.data()) kt += v;
      row.kt_mean = kt / static_cast<double>(out.ctx.kT.size());
      row.grad_norm = state.opt.grad_norm();
      row.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      result.rows.push_back(std::move(row));
    }
    state.step = step + 1;
  }
  return result;
}

}  // namespace c2e
