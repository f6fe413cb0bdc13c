// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace c2e {

// ----- attention -----

Tensor MultiHeadAttention::forward(const Tensor& x, std::vector<double>* attn_out) const {
  const size_t dh = width / heads;
  Tensor q = linear(x, wq, bq);
  Tensor k = linear(x, wk, bk);
  Tensor v = linear(x, wv, bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_last(q, h * dh, dh);
    Tensor kh = slice_last(k, h * dh, dh);
    Tensor vh = slice_last(v, h * dh, dh);
    Tensor probs = softmax_last(mul_scalar(matmul_nt(qh, kh), scale));  // [B,N,N]
    if (attn_out) {
      // batch-averaged probabilities for saliency export
      const size_t b = probs.dim(0), n = probs.dim(1);
      for (size_t i = 0; i < n * n; ++i) {
        double s = 0.0;
        for (size_t bi = 0; bi < b; ++bi) s += probs.data()[bi * n * n + i];
        attn_out->push_back(s / static_cast<double>(b));
      }
    }
    head_out.push_back(matmul(probs, vh));
  }
  return linear(concat_last(head_out), wo, bo);
}

// ----- patches -----

PatchBatch patchify(const Tensor& images, size_t patch) {
  if (images.rank() != 4 || images.dim(3) != 3)
    throw ShapeError("patchify: expected [B,H,W,3] images");
  const size_t b = images.dim(0), h = images.dim(1), w = images.dim(2);
  if (h % patch != 0 || w % patch != 0)
    throw ShapeError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by patch " + std::to_string(patch));
  const size_t gh = h / patch, gw = w / patch, n = gh * gw;
  const size_t pd = patch * patch * 3;

  std::vector<size_t> perm(b * n * pd);
  size_t o = 0;
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t gr = 0; gr < gh; ++gr)
      for (size_t gc = 0; gc < gw; ++gc)
        for (size_t pr = 0; pr < patch; ++pr)
          for (size_t pc = 0; pc < patch; ++pc)
            for (size_t ch = 0; ch < 3; ++ch)
              perm[o++] = ((bi * h + gr * patch + pr) * w + gc * patch + pc) * 3 + ch;

  PatchBatch out;
  out.tokens = permute_flat(images, perm, {b, n, pd});
  out.image_size = h;
  out.patch_size = patch;
  out.grid = gh;
  out.positions.reserve(n);
  for (size_t gr = 0; gr < gh; ++gr)
    for (size_t gc = 0; gc < gw; ++gc) out.positions.emplace_back(gr, gc);
  return out;
}

Tensor unpatchify(const Tensor& tokens, size_t image_size, size_t patch) {
  if (tokens.rank() != 3) throw ShapeError("unpatchify: expected [B,N,patch*patch*3]");
  const size_t b = tokens.dim(0), g = image_size / patch;
  if (tokens.dim(1) != g * g || tokens.dim(2) != patch * patch * 3)
    throw ShapeError("unpatchify: token grid does not match image size");
  const size_t hw = image_size;

  std::vector<size_t> perm(tokens.size());
  size_t src = 0;
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t gr = 0; gr < g; ++gr)
      for (size_t gc = 0; gc < g; ++gc)
        for (size_t pr = 0; pr < patch; ++pr)
          for (size_t pc = 0; pc < patch; ++pc)
            for (size_t ch = 0; ch < 3; ++ch)
              perm[((bi * hw + gr * patch + pr) * hw + gc * patch + pc) * 3 + ch] = src++;

  return permute_flat(tokens, perm, {b, hw, hw, 3});
}

// ----- masking -----

MaskPlan plan_mask(size_t n, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw ConfigError("plan_mask: mask ratio must lie in [0,1)");
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = rng.seed();
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_below(i)]);
  const size_t m = static_cast<size_t>(std::floor(ratio * static_cast<double>(n)));
  plan.masked.assign(perm.begin(), perm.begin() + m);
  plan.visible.assign(perm.begin() + m, perm.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

// ----- blocks -----

EncoderBlock::EncoderBlock(size_t width, size_t delta, size_t heads, double beta_init,
                           Rng& rng, bool baseline_vit, double mlp_ratio)
    : in_width(width),
      out_width(width - delta),
      ln(width),
      attn(heads, width, rng),
      d_map(init::identity(width)),
      vinv_map(init::identity(width)),
      s_map(init::identity(width)),
      p_map(init::zeros({width - delta, width - delta})),
      baseline(baseline_vit) {
  if (!(beta_init > 0.0)) throw ConfigError("compression block: beta must be > 0");
  // softplus^-1 so that step_size() == beta_init at construction
  raw_beta = Tensor::from_data({1}, {std::log(std::expm1(beta_init))}, true);
  if (baseline) {
    ln2 = LayerNorm(width);
    mlp = Mlp(width, static_cast<size_t>(width * mlp_ratio), rng);
  }
}

double EncoderBlock::step_size() const {
  const double x = raw_beta.data()[0];
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

Tensor EncoderBlock::compression_step(const Tensor& z) const {
  Tensor u = matmul_nt(z, d_map);
  u = matmul_nt(u, vinv_map);
  u = matmul_nt(u, s_map);
  return sub(z, mul_scalar_t(u, softplus_t(raw_beta)));
}

Tensor EncoderBlock::subspace_project(const Tensor& z_half) const {
  Tensor t = slice_last(z_half, 0, out_width);
  return add(t, matmul_nt(t, p_map));
}

Tensor EncoderBlock::forward(const Tensor& x, std::vector<double>* attn_out) const {
  Tensor h = add(x, attn.forward(ln.forward(x), attn_out));
  h = baseline ? add(h, mlp.forward(ln2.forward(h))) : compression_step(h);
  return subspace_project(h);
}

void EncoderBlock::register_params(ParamRegistry& reg, const std::string& prefix) const {
  ln.register_params(reg, prefix + ".ln");
  attn.register_params(reg, prefix + ".attn");
  if (baseline) {
    ln2.register_params(reg, prefix + ".ln2");
    mlp.register_params(reg, prefix + ".mlp");
  } else {
    reg.add(prefix + ".d", d_map);
    reg.add(prefix + ".vinv", vinv_map);
    reg.add(prefix + ".s", s_map);
    reg.add(prefix + ".beta", raw_beta);
  }
  reg.add(prefix + ".p", p_map);
}

// ----- encoder -----

Encoder::Encoder(const C2EConfig& cfg, Rng& rng)
    : schedule_(cfg.schedule()), token_count_(cfg.token_count()), jitter_(cfg.jitter) {
  schedule_.validate();
  embed_w = init::normal({cfg.channel_top, cfg.patch_dim()}, rng);
  embed_b = init::zeros({cfg.channel_top});
  pos_embed = init::normal({token_count_, cfg.channel_top}, rng);
  const auto w = schedule_.widths();
  for (size_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(w[i], cfg.channel_delta, cfg.heads, cfg.beta_step_init, rng,
                         cfg.baseline_vit, cfg.mlp_ratio);
  final_ln_ = LayerNorm(schedule_.latent_width());
}

LatentState Encoder::encode(const PatchBatch& batch, const MaskPlan& plan,
                            ForwardTrace* trace) const {
  if (batch.tokens.dim(1) != token_count_)
    throw ShapeError("encode: batch has " + std::to_string(batch.tokens.dim(1)) +
                     " tokens, expected " + std::to_string(token_count_));
  // standardize raw [0,1] pixels before embedding
  Tensor x = linear(mul_scalar(add_scalar(batch.tokens, -0.5), 2.0), embed_w, embed_b);
  x = add_rowmat(x, pos_embed);
  x = gather_rows(x, plan.visible);

  LatentState state;
  state.widths = schedule_.widths();
  if (trace) {
    trace->heads = blocks_.empty() ? 0 : blocks_[0].attn.heads;
    trace->tokens = plan.visible.size();
  }
  for (const auto& block : blocks_) {
    std::vector<double>* attn_sink = nullptr;
    if (trace) {
      trace->enc_attention.emplace_back();
      attn_sink = &trace->enc_attention.back();
    }
    x = block.forward(x, attn_sink);
    // Entropy of the post-block latent over all batch tokens.
    Tensor flat = reshape(x, {x.dim(0) * x.dim(1), x.dim(2)});
    state.layer_entropy.push_back(gaussian_entropy(flat, jitter_));
  }
  state.tokens = final_ln_.forward(x);
  return state;
}

void Encoder::register_params(ParamRegistry& reg) const {
  reg.add("enc.embed.w", embed_w);
  reg.add("enc.embed.b", embed_b);
  reg.add("enc.pos", pos_embed);
  for (size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].register_params(reg, "enc.block" + std::to_string(i));
  final_ln_.register_params(reg, "enc.norm");
}

}  // namespace c2e
