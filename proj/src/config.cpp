// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace c2e {

using json = nlohmann::json;

void C2EConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0)
    throw ConfigError("config: image size " + std::to_string(image_size) +
                      " not divisible by patch size " + std::to_string(patch_size));
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
    throw ConfigError("config: mask_ratio must lie in [0,1)");
  schedule().validate();
  if (heads == 0) throw ConfigError("config: heads must be >= 1");
  const auto w = schedule().widths();
  for (size_t i = 0; i < w.size(); ++i)
    if (w[i] % heads != 0)
      throw ConfigError("config: width " + std::to_string(w[i]) +
                        " not divisible by heads " + std::to_string(heads));
  if (!(beta_step_init > 0.0)) throw ConfigError("config: beta_step_init must be > 0");
  if (!(conditional_ratio > 0.0 && conditional_ratio <= 1.0))
    throw ConfigError("config: conditional_ratio must lie in (0,1]");
  if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be > 0");
  if (loss != "l1" && loss != "l2")
    throw ConfigError("config: loss must be \"l1\" or \"l2\", got \"" + loss + "\"");
  if (temp_hidden == 0 || energy_hidden == 0)
    throw ConfigError("config: hidden widths must be >= 1");
  if (!(mlp_ratio > 0.0)) throw ConfigError("config: mlp_ratio must be > 0");
  if (!(optimizer.lr > 0.0)) throw ConfigError("config: lr must be > 0");
  if (optimizer.weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("config: adam betas must lie in [0,1)");
  if (!(optimizer.warmup_frac >= 0.0 && optimizer.warmup_frac <= 1.0))
    throw ConfigError("config: warmup_frac must lie in [0,1]");
  if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  if (log_every == 0) throw ConfigError("config: log_every must be >= 1");
}

std::string C2EConfig::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["patch_size"] = patch_size;
  j["mask_ratio"] = mask_ratio;
  j["depth"] = depth;
  j["channel_top"] = channel_top;
  j["channel_delta"] = channel_delta;
  j["heads"] = heads;
  j["beta_step_init"] = beta_step_init;
  j["conditional_ratio"] = conditional_ratio;
  j["epsilon"] = epsilon;
  j["noise"] = noise;
  j["loss"] = loss;
  j["temp_hidden"] = temp_hidden;
  j["energy_hidden"] = energy_hidden;
  j["baseline_vit"] = baseline_vit;
  j["mlp_ratio"] = mlp_ratio;
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"weight_decay", optimizer.weight_decay},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps},
                    {"warmup_frac", optimizer.warmup_frac}};
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["jitter"] = jitter;
  j["log_every"] = log_every;
  j["ckpt_every"] = ckpt_every;
  return j.dump(2);
}

C2EConfig C2EConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  C2EConfig c;
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    c.depth = j.value("depth", c.depth);
    c.channel_top = j.value("channel_top", c.channel_top);
    c.channel_delta = j.value("channel_delta", c.channel_delta);
    c.heads = j.value("heads", c.heads);
    c.beta_step_init = j.value("beta_step_init", c.beta_step_init);
    c.conditional_ratio = j.value("conditional_ratio", c.conditional_ratio);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.noise = j.value("noise", c.noise);
    c.loss = j.value("loss", c.loss);
    c.temp_hidden = j.value("temp_hidden", c.temp_hidden);
    c.energy_hidden = j.value("energy_hidden", c.energy_hidden);
    c.baseline_vit = j.value("baseline_vit", c.baseline_vit);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
      c.optimizer.warmup_frac = o.value("warmup_frac", c.optimizer.warmup_frac);
    }
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.jitter = j.value("jitter", c.jitter);
    c.log_every = j.value("log_every", c.log_every);
    c.ckpt_every = j.value("ckpt_every", c.ckpt_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field type: ") + e.what());
  }
  c.validate();
  return c;
}

C2EConfig C2EConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void C2EConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  out << to_json() << "\n";
}

uint64_t C2EConfig::hash() const {
  const std::string s = to_json();
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace c2e
