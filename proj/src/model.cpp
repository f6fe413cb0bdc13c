// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/model.hpp"

namespace c2e {

C2EModel::C2EModel(const C2EConfig& cfg, Rng init_rng) : cfg_(cfg) {
  cfg_.validate();
  Rng enc_rng = init_rng.derive(1);
  Rng dec_rng = init_rng.derive(2);
  enc_ = Encoder(cfg_, enc_rng);
  dec_ = Decoder(cfg_, dec_rng);
}

C2EModel::StepResult C2EModel::forward_loss(const Tensor& images, const MaskPlan& plan,
                                            Rng& noise_rng, bool noise_on,
                                            ForwardTrace* trace) const {
  PatchBatch batch = patchify(images, cfg_.patch_size);
  StepResult r;
  r.latent = enc_.encode(batch, plan, trace);
  r.pred = dec_.decode(r.latent, plan, noise_rng, noise_on, &r.ctx);
  // Targets are raw patch pixels; the loss normalizes per patch and treats
  // them as constants.
  Tensor target = [&] {
    NoGradGuard ng;
    return patchify(images, cfg_.patch_size).tokens;
  }();
  r.loss = reconstruction_loss(r.pred, target, plan, cfg_.loss);
  return r;
}

LatentState C2EModel::encode_all(const Tensor& images, ForwardTrace* trace) const {
  PatchBatch batch = patchify(images, cfg_.patch_size);
  MaskPlan plan;
  plan.ratio = 0.0;
  for (size_t i = 0; i < cfg_.token_count(); ++i) plan.visible.push_back(i);
  return enc_.encode(batch, plan, trace);
}

ParamRegistry C2EModel::params() const {
  ParamRegistry reg;
  enc_.register_params(reg);
  dec_.register_params(reg);
  return reg;
}

}  // namespace c2e
