// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/decoder.hpp"

#include <cmath>

namespace c2e {

// ----- temperature head -----

TemperatureHead::TemperatureHead(size_t latent_width, double conditional_ratio,
                                 size_t hidden, Rng& rng) {
  if (!(conditional_ratio > 0.0 && conditional_ratio <= 1.0))
    throw ConfigError("temperature head: conditional ratio must lie in (0,1]");
  cond_channels = static_cast<size_t>(
      std::ceil(conditional_ratio * static_cast<double>(latent_width)));
  wh = init::normal({hidden, cond_channels}, rng);
  bh = init::zeros({hidden});
  wt = init::normal({1, hidden}, rng);
  bt = init::zeros({1});
}

EnergyContext TemperatureHead::forward(const Tensor& z0, double conditional_ratio) const {
  EnergyContext ctx;
  ctx.conditional_ratio = conditional_ratio;
  ctx.cond_channels = cond_channels;
  Tensor part = slice_last(z0, 0, cond_channels);  // [B,V,c']
  Tensor pooled = mean_rows(part);                 // [B,c']
  ctx.h = linear(pooled, wh, bh);                  // [B,C_h]
  ctx.kT = add_scalar(softplus_t(linear(ctx.h, wt, bt)), 1e-4);  // [B,1]
  return ctx;
}

void TemperatureHead::register_params(ParamRegistry& reg, const std::string& prefix) const {
  reg.add(prefix + ".wh", wh);
  reg.add(prefix + ".bh", bh);
  reg.add(prefix + ".wt", wt);
  reg.add(prefix + ".bt", bt);
}

// ----- Langevin update -----

Tensor langevin_update(const Tensor& z, const Tensor& energies, const Tensor& energy_grad,
                       const Tensor& kT, double eps, Rng& rng, bool noise_on) {
  Tensor drift = mul_token_scalar(energy_grad, energies);       // E * dE/dz
  drift = mul_batch_scalar(drift, reciprocal_t(kT));            // / kT
  Tensor out = add(z, mul_scalar(drift, -eps));
  if (noise_on) {
    const double s = std::sqrt(2.0 * eps);
    std::vector<double> w(z.size());
    for (double& x : w) x = rng.normal() * s;
    out = add(out, Tensor::from_data(z.shape(), std::move(w)));
  }
  return out;
}

// ----- exploration block -----

ExplorationBlock::ExplorationBlock(size_t width_, size_t delta, size_t heads,
                                   size_t energy_hidden, double eps_, Rng& rng,
                                   bool baseline_vit, double mlp_ratio)
    : width(width_),
      out_width(width_ + delta),
      eps(eps_),
      ln(width_),
      attn(heads, width_, rng),
      e_w1(init::normal({energy_hidden, width_}, rng)),
      e_b1(init::zeros({energy_hidden})),
      e_w2(init::normal({1, energy_hidden}, rng)),
      e_b2(init::zeros({1})),
      pinv_map(init::zeros({width_ + delta, width_ + delta})),
      baseline(baseline_vit) {
  // identity-pad so the initial widening is [z; 0]
  std::vector<double> wdata((width_ + delta) * width_, 0.0);
  for (size_t i = 0; i < width_; ++i) wdata[i * width_ + i] = 1.0;
  widen_map = Tensor::from_data({width_ + delta, width_}, std::move(wdata), true);
  if (baseline) {
    ln2 = LayerNorm(width_);
    mlp = Mlp(width_, static_cast<size_t>(width_ * mlp_ratio), rng);
  }
}

Tensor ExplorationBlock::energy(const Tensor& z) const {
  return linear(tanh_t(linear(z, e_w1, e_b1)), e_w2, e_b2);
}

Tensor ExplorationBlock::energy_input_grad(const Tensor& z) const {
  // dE/dz = W1^T (tanh'(a) . w2) with tanh'(a) = 1 - tanh(a)^2, written in
  // primitives so the training gradient differentiates through it.
  Tensor t = tanh_t(linear(z, e_w1, e_b1));            // [B,N,H]
  Tensor phi = add_scalar(neg(mul(t, t)), 1.0);        // 1 - t^2
  Tensor w2v = reshape(e_w2, {e_w2.dim(1)});           // [H]
  return matmul(mul_last_vec(phi, w2v), e_w1);         // [B,N,H] x [H,C]
}

Tensor ExplorationBlock::langevin_step(const Tensor& z, const EnergyContext& ctx,
                                       Rng& rng, bool noise_on, long layer_index) const {
  Tensor e = energy(z);
  for (double v : e.data())
    if (!std::isfinite(v))
      throw DivergenceError("langevin: non-finite energy at decoder layer " +
                                std::to_string(layer_index),
                            layer_index);
  Tensor g = energy_input_grad(z);
  return langevin_update(z, e, g, ctx.kT, eps, rng, noise_on);
}

Tensor ExplorationBlock::inverse_project(const Tensor& z_half) const {
  Tensor widened = matmul_nt(z_half, widen_map);
  return add(widened, matmul_nt(widened, pinv_map));
}

Tensor ExplorationBlock::forward(const Tensor& x, EnergyContext& ctx, Rng& rng,
                                 bool noise_on, long layer_index) const {
  Tensor h = add(x, attn.forward(ln.forward(x)));
  if (baseline) {
    h = add(h, mlp.forward(ln2.forward(h)));
  } else {
    ctx.layer_energies.push_back(energy(h));
    h = langevin_step(h, ctx, rng, noise_on, layer_index);
  }
  return inverse_project(h);
}

void ExplorationBlock::register_params(ParamRegistry& reg, const std::string& prefix) const {
  ln.register_params(reg, prefix + ".ln");
  attn.register_params(reg, prefix + ".attn");
  if (baseline) {
    ln2.register_params(reg, prefix + ".ln2");
    mlp.register_params(reg, prefix + ".mlp");
  } else {
    reg.add(prefix + ".e_w1", e_w1);
    reg.add(prefix + ".e_b1", e_b1);
    reg.add(prefix + ".e_w2", e_w2);
    reg.add(prefix + ".e_b2", e_b2);
  }
  reg.add(prefix + ".widen", widen_map);
  reg.add(prefix + ".pinv", pinv_map);
}

// ----- decoder -----

Decoder::Decoder(const C2EConfig& cfg, Rng& rng)
    : token_count_(cfg.token_count()), conditional_ratio_(cfg.conditional_ratio) {
  const size_t c0 = cfg.schedule().latent_width();
  temp_ = TemperatureHead(c0, cfg.conditional_ratio, cfg.temp_hidden, rng);
  mask_token = init::normal({c0}, rng);
  dec_pos = init::normal({token_count_, c0}, rng);
  // widths run C0 -> C_top, the exact reverse of the encoder schedule
  for (size_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(c0 + i * cfg.channel_delta, cfg.channel_delta, cfg.heads,
                         cfg.energy_hidden, cfg.epsilon, rng, cfg.baseline_vit,
                         cfg.mlp_ratio);
  final_ln_ = LayerNorm(cfg.channel_top);
  head_w = init::normal({cfg.patch_dim(), cfg.channel_top}, rng);
  head_b = init::zeros({cfg.patch_dim()});
}

Tensor Decoder::decode(const LatentState& z0, const MaskPlan& plan, Rng& rng,
                       bool noise_on, EnergyContext* ctx_out) const {
  EnergyContext ctx = temp_.forward(z0.tokens, conditional_ratio_);
  Tensor x = assemble_rows(z0.tokens, plan.visible, mask_token, plan.masked);
  x = add_rowmat(x, dec_pos);
  for (size_t i = 0; i < blocks_.size(); ++i)
    x = blocks_[i].forward(x, ctx, rng, noise_on, static_cast<long>(i));
  Tensor pred = linear(final_ln_.forward(x), head_w, head_b);
  if (ctx_out) *ctx_out = std::move(ctx);
  return pred;
}

void Decoder::register_params(ParamRegistry& reg) const {
  reg.add("dec.mask_token", mask_token);
  reg.add("dec.pos", dec_pos);
  temp_.register_params(reg, "dec.temp");
  for (size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].register_params(reg, "dec.block" + std::to_string(i));
  final_ln_.register_params(reg, "dec.norm");
  reg.add("dec.head.w", head_w);
  reg.add("dec.head.b", head_b);
}

// ----- loss -----

Tensor reconstruction_loss(const Tensor& pred, const Tensor& target_patches,
                           const MaskPlan& plan, const std::string& kind) {
  if (pred.shape() != target_patches.shape())
    throw ShapeError("reconstruction_loss: prediction and target shapes differ");
  const size_t b = pred.dim(0), n = pred.dim(1), d = pred.dim(2);

  // Per-patch normalization of the target (treated as constant data). The
  // variance floor is sized for [0,1] pixels so near-flat patches damp to
  // zero instead of amplifying sensor-scale noise to unit targets.
  constexpr double kVarFloor = 1e-4;
  std::vector<double> norm(b * n * d);
  {
    NoGradGuard ng;
    for (size_t r = 0; r < b * n; ++r) {
      const double* t = target_patches.data().data() + r * d;
      double mu = 0.0;
      for (size_t j = 0; j < d; ++j) mu += t[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (size_t j = 0; j < d; ++j) var += (t[j] - mu) * (t[j] - mu);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + kVarFloor);
      for (size_t j = 0; j < d; ++j) norm[r * d + j] = (t[j] - mu) * inv;
    }
  }
  Tensor target = Tensor::from_data(pred.shape(), std::move(norm));

  std::vector<double> weights(n, 0.0);
  for (size_t i : plan.masked) weights[i] = 1.0;
  if (kind == "l1") return masked_l1(pred, target, weights);
  if (kind == "l2") return masked_l2(pred, target, weights);
  throw ConfigError("reconstruction_loss: unknown kind \"" + kind + "\"");
}

}  // namespace c2e
