// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "c2e/encoder.hpp"
#include "c2e/info_metrics.hpp"
#include "oracles.hpp"

using namespace c2e;

namespace {

C2EConfig small_config() {
  C2EConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;  // 4 tokens
  cfg.depth = 2;
  cfg.channel_top = 16;
  cfg.channel_delta = 4;  // 16 -> 12 -> 8
  cfg.heads = 2;
  cfg.temp_hidden = 8;
  cfg.energy_hidden = 8;
  cfg.batch_size = 2;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("patchify token counts") {
  Rng rng(1);
  Tensor big = Tensor::randn({1, 224, 224, 3}, rng);
  CHECK(patchify(big, 16).tokens.dim(1) == 196);

  Tensor small = Tensor::randn({1, 32, 32, 3}, rng);
  CHECK(patchify(small, 16).tokens.dim(1) == 4);

  CHECK_THROWS_AS(patchify(Tensor::zeros({1, 30, 30, 3}), 16), ShapeError);
}

TEST_CASE("unpatchify inverts patchify bit-exactly") {
  Rng rng(2);
  Tensor img = Tensor::randn({2, 32, 32, 3}, rng);
  PatchBatch pb = patchify(img, 8);
  Tensor back = unpatchify(pb.tokens, 32, 8);
  REQUIRE(back.size() == img.size());
  for (size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == img.data()[i]);
}

TEST_CASE("plan_mask counts and determinism") {
  Rng rng(7);
  MaskPlan plan = plan_mask(196, 0.75, rng);
  CHECK(plan.masked.size() == 147);
  CHECK(plan.visible.size() == 49);

  // disjoint cover of 0..n-1
  std::vector<int> seen(196, 0);
  for (size_t i : plan.masked) seen[i]++;
  for (size_t i : plan.visible) seen[i]++;
  for (int s : seen) CHECK(s == 1);

  Rng rng2(7);
  MaskPlan again = plan_mask(196, 0.75, rng2);
  CHECK(again.masked == plan.masked);
  CHECK(again.visible == plan.visible);

  Rng rng3(8);
  MaskPlan all_visible = plan_mask(16, 0.0, rng3);
  CHECK(all_visible.masked.empty());
  CHECK(all_visible.visible.size() == 16);

  Rng rng4(9);
  CHECK_THROWS_AS(plan_mask(16, 1.0, rng4), ConfigError);
  CHECK_THROWS_AS(plan_mask(16, -0.1, rng4), ConfigError);
}

TEST_CASE("compression_step with identity maps is pure shrinkage") {
  Rng rng(3);
  EncoderBlock block(8, 2, 2, 0.1, rng, false, 4.0);
  Tensor z = Tensor::randn({2, 4, 8}, rng);
  Tensor out = block.compression_step(z);
  const double beta = block.step_size();
  CHECK(beta == doctest::Approx(0.1).epsilon(1e-12));
  double nz = 0.0, no = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    CHECK(out.data()[i] == doctest::Approx((1.0 - beta) * z.data()[i]).epsilon(1e-14));
    nz += z.data()[i] * z.data()[i];
    no += out.data()[i] * out.data()[i];
  }
  CHECK(std::sqrt(no) == doctest::Approx((1.0 - beta) * std::sqrt(nz)).epsilon(1e-14));
}

TEST_CASE("compression_step with vanishing beta is the identity") {
  Rng rng(4);
  EncoderBlock block(8, 2, 2, 0.1, rng, false, 4.0);
  block.raw_beta.raw_data()[0] = -60.0;  // softplus ~ 8.8e-27
  Tensor z = Tensor::randn({1, 4, 8}, rng);
  Tensor out = block.compression_step(z);
  for (size_t i = 0; i < z.size(); ++i) CHECK(out.data()[i] == z.data()[i]);
}

TEST_CASE("subspace_project: zero map truncates, identity map doubles") {
  Rng rng(5);
  EncoderBlock block(8, 2, 2, 0.1, rng, false, 4.0);
  Tensor z = Tensor::randn({1, 3, 8}, rng);
  Tensor out = block.subspace_project(z);  // p_map is zero at init
  REQUIRE(out.dim(2) == 6);
  for (size_t t = 0; t < 3; ++t)
    for (size_t c = 0; c < 6; ++c)
      CHECK(out.at({0, t, c}) == z.at({0, t, c}));

  // delta = 0 with P = I doubles the input
  EncoderBlock wide(8, 0, 2, 0.1, rng, false, 4.0);
  for (size_t i = 0; i < 8; ++i) wide.p_map.raw_data()[i * 8 + i] = 1.0;
  Tensor out2 = wide.subspace_project(z);
  for (size_t i = 0; i < z.size(); ++i)
    CHECK(out2.data()[i] == doctest::Approx(2.0 * z.data()[i]).epsilon(1e-15));
}

TEST_CASE("subspace_project sends no gradient to removed channels") {
  Rng rng(6);
  EncoderBlock block(8, 2, 2, 0.1, rng, false, 4.0);
  Tensor z = Tensor::randn({1, 3, 8}, rng, 1.0, true);
  Tensor w = Tensor::randn({1, 3, 6}, rng);
  backward(sum_all(mul(block.subspace_project(z), w)));
  for (size_t t = 0; t < 3; ++t) {
    for (size_t c = 0; c < 6; ++c) CHECK(z.grad()[t * 8 + c] != 0.0);
    for (size_t c = 6; c < 8; ++c) CHECK(z.grad()[t * 8 + c] == 0.0);
  }
}

TEST_CASE("encode preserves token count and width schedule") {
  C2EConfig cfg = small_config();
  Rng init(11);
  Encoder enc(cfg, init);
  Rng rng(12);
  Tensor img = Tensor::randn({2, 16, 16, 3}, rng);
  PatchBatch pb = patchify(img, cfg.patch_size);
  Rng mask_rng(13);
  MaskPlan plan = plan_mask(4, 0.5, mask_rng);
  LatentState state = enc.encode(pb, plan);
  CHECK(state.tokens.dim(1) == plan.visible.size());
  CHECK(state.tokens.dim(2) == cfg.schedule().latent_width());
  CHECK(state.widths == std::vector<size_t>{16, 12, 8});

  REQUIRE(state.layer_entropy.size() == cfg.depth);
  for (const auto& rep : state.layer_entropy) CHECK(std::isfinite(rep.entropy));
}

TEST_CASE("encoder block is permutation-equivariant over tokens") {
  Rng rng(21);
  EncoderBlock block(8, 2, 2, 0.1, rng, false, 4.0);
  // non-trivial maps
  for (auto* t : {&block.d_map, &block.vinv_map, &block.s_map, &block.p_map})
    for (double& v : t->raw_data()) v += 0.05 * rng.normal();

  Tensor z = Tensor::randn({2, 5, 8}, rng);
  std::vector<size_t> perm{3, 0, 4, 1, 2};
  Tensor zp = gather_rows(z, perm);
  Tensor a = block.forward(z);
  Tensor b = block.forward(zp);
  for (size_t bi = 0; bi < 2; ++bi)
    for (size_t t = 0; t < 5; ++t)
      for (size_t c = 0; c < 6; ++c)
        CHECK(b.at({bi, t, c}) == doctest::Approx(a.at({bi, perm[t], c})).epsilon(1e-12));
}

TEST_CASE("encode commutes with a joint permutation of patches and positions") {
  C2EConfig cfg = small_config();
  Rng init_a(31);
  Encoder enc_a(cfg, init_a);
  Rng init_b(31);
  Encoder enc_b(cfg, init_b);  // identical parameters

  std::vector<size_t> perm{2, 0, 3, 1};
  // permute the second encoder's positional rows to follow the patch shuffle
  {
    ParamRegistry ra, rb;
    enc_a.register_params(ra);
    enc_b.register_params(rb);
    Tensor pa = ra.find("enc.pos");
    Tensor pb = rb.find("enc.pos");
    const size_t c = pa.shape()[1];
    for (size_t t = 0; t < 4; ++t)
      for (size_t j = 0; j < c; ++j)
        pb.raw_data()[t * c + j] = pa.data()[perm[t] * c + j];
  }

  Rng rng(32);
  Tensor img = Tensor::randn({1, 16, 16, 3}, rng);
  PatchBatch batch = patchify(img, cfg.patch_size);
  PatchBatch shuffled = batch;
  shuffled.tokens = gather_rows(batch.tokens, perm);

  // visible set {0,2} in original indexing; under perm^-1 those tokens sit at
  // rows 1 (orig 0) and 0 (orig 2)
  MaskPlan plan_a;
  plan_a.visible = {0, 2};
  plan_a.masked = {1, 3};
  MaskPlan plan_b;
  plan_b.visible = {0, 1};
  plan_b.masked = {2, 3};

  LatentState sa = enc_a.encode(batch, plan_a);
  LatentState sb = enc_b.encode(shuffled, plan_b);

  // row for original token 2 is sb row 0; original token 0 is sb row 1
  const size_t c0 = cfg.schedule().latent_width();
  for (size_t j = 0; j < c0; ++j) {
    CHECK(sb.tokens.at({0, 0, j}) == doctest::Approx(sa.tokens.at({0, 1, j})).epsilon(1e-12));
    CHECK(sb.tokens.at({0, 1, j}) == doctest::Approx(sa.tokens.at({0, 0, j})).epsilon(1e-12));
  }
}

TEST_CASE("end-to-end gradient check through two blocks on four tokens") {
  C2EConfig cfg = small_config();
  Rng init(41);
  Encoder enc(cfg, init);
  Rng mask_rng(42);
  MaskPlan plan = plan_mask(4, 0.5, mask_rng);
  Rng wr(43);
  Tensor w = Tensor::randn({1, 2, 8}, wr);

  Rng ir(44);
  Tensor img = Tensor::randn({1, 16, 16, 3}, ir, 0.5);
  double err = grad_check(
      [&](const Tensor& x) {
        PatchBatch pb = patchify(x, cfg.patch_size);
        return sum_all(mul(enc.encode(pb, plan).tokens, w));
      },
      img, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("distilled compression maps track the entropy-gradient oracle") {
  // Fit S(Vinv(D(z))) to -exact_entropy_gradient(z) on fixed data, then
  // compare the learned update direction with the oracle step.
  Rng rng(51);
  const size_t n = 32, c = 12;
  Tensor z_raw = Tensor::randn({n, c}, rng);
  // center so the oracle is the exact gradient of the covariance objective
  std::vector<double> zd = z_raw.data();
  for (size_t j = 0; j < c; ++j) {
    double m = 0.0;
    for (size_t i = 0; i < n; ++i) m += zd[i * c + j];
    m /= n;
    for (size_t i = 0; i < n; ++i) zd[i * c + j] -= m;
  }
  Tensor z = Tensor::from_data({n, c}, zd);
  Tensor target = neg(exact_entropy_gradient(z, 1e-6));  // constant

  EncoderBlock block(c, 0, 2, 0.1, rng, false, 4.0);
  std::vector<Tensor> maps{block.d_map, block.vinv_map, block.s_map};

  // Adam on the squared regression error
  std::vector<std::vector<double>> m1(3), m2(3);
  for (int i = 0; i < 3; ++i) {
    m1[i].assign(c * c, 0.0);
    m2[i].assign(c * c, 0.0);
  }
  const double lr = 0.05, b1 = 0.9, b2 = 0.999;
  for (int step = 1; step <= 200; ++step) {
    for (auto& mp : maps) mp.zero_grad();
    Tensor u = matmul_nt(matmul_nt(matmul_nt(z, block.d_map), block.vinv_map), block.s_map);
    Tensor diff = sub(u, target);
    backward(sum_all(mul(diff, diff)));
    for (int i = 0; i < 3; ++i) {
      auto& p = maps[i].raw_data();
      const auto& g = maps[i].grad();
      for (size_t k = 0; k < p.size(); ++k) {
        m1[i][k] = b1 * m1[i][k] + (1 - b1) * g[k];
        m2[i][k] = b2 * m2[i][k] + (1 - b2) * g[k] * g[k];
        const double mh = m1[i][k] / (1 - std::pow(b1, step));
        const double vh = m2[i][k] / (1 - std::pow(b2, step));
        p[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }

  // cosine between learned update and oracle update
  Tensor learned = block.compression_step(reshape(z, {1, n, c}));
  Tensor oracle_grad = exact_entropy_gradient(z, 1e-6);
  const double beta = block.step_size();
  double dot = 0.0, nl = 0.0, no = 0.0;
  for (size_t i = 0; i < n * c; ++i) {
    const double lu = learned.data()[i] - z.data()[i];
    const double ou = beta * oracle_grad.data()[i];
    dot += lu * ou;
    nl += lu * lu;
    no += ou * ou;
  }
  const double cosine = dot / (std::sqrt(nl) * std::sqrt(no) + 1e-12);
  INFO("cosine " << cosine);
  CHECK(cosine > 0.8);
}

namespace {

// Fit the block's composed linear maps to the oracle descent direction on
// the given token matrix (Adam, squared error).
void distill_block(EncoderBlock& block, const Tensor& flat_tokens, int steps) {
  Tensor target = neg(exact_entropy_gradient(flat_tokens, 1e-6));
  std::vector<Tensor> maps{block.d_map, block.vinv_map, block.s_map};
  std::vector<std::vector<double>> m1(3), m2(3);
  for (int i = 0; i < 3; ++i) {
    m1[i].assign(maps[i].size(), 0.0);
    m2[i].assign(maps[i].size(), 0.0);
  }
  const double lr = 0.05, b1 = 0.9, b2 = 0.999;
  for (int step = 1; step <= steps; ++step) {
    for (auto& mp : maps) mp.zero_grad();
    Tensor u = matmul_nt(matmul_nt(matmul_nt(flat_tokens, block.d_map), block.vinv_map),
                         block.s_map);
    Tensor diff = sub(u, target);
    backward(sum_all(mul(diff, diff)));
    for (int i = 0; i < 3; ++i) {
      auto& p = maps[i].raw_data();
      const auto& g = maps[i].grad();
      for (size_t k = 0; k < p.size(); ++k) {
        m1[i][k] = b1 * m1[i][k] + (1 - b1) * g[k];
        m2[i][k] = b2 * m2[i][k] + (1 - b2) * g[k] * g[k];
        const double mh = m1[i][k] / (1 - std::pow(b1, step));
        const double vh = m2[i][k] / (1 - std::pow(b2, step));
        p[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }
}

}  // namespace

TEST_CASE("per-layer entropy is non-increasing with oracle-matched steps") {
  // Stack of three blocks distilled one after another on a training batch,
  // then entropy measured layer by layer on held-out data.
  Rng rng(61);
  std::vector<EncoderBlock> blocks;
  blocks.emplace_back(24, 4, 2, 0.1, rng, false, 4.0);
  blocks.emplace_back(20, 4, 2, 0.1, rng, false, 4.0);
  blocks.emplace_back(16, 4, 2, 0.1, rng, false, 4.0);

  Rng data_rng(62);
  Tensor train = Tensor::randn({6, 16, 24}, data_rng);  // [B,N,C]
  Tensor held = Tensor::randn({6, 16, 24}, data_rng);

  {
    Tensor x = train;
    for (auto& block : blocks) {
      Tensor pre = add(x, block.attn.forward(block.ln.forward(x)));
      Tensor flat = reshape(pre, {pre.dim(0) * pre.dim(1), pre.dim(2)});
      distill_block(block, Tensor::from_data(flat.shape(), flat.data()), 150);
      NoGradGuard ng;
      x = block.forward(x);
    }
  }

  NoGradGuard ng;
  Tensor x = held;
  std::vector<double> trail;
  for (const auto& block : blocks) {
    x = block.forward(x);
    Tensor flat = reshape(x, {x.dim(0) * x.dim(1), x.dim(2)});
    trail.push_back(gaussian_entropy(flat).entropy);
  }
  for (size_t i = 1; i < trail.size(); ++i) CHECK(trail[i] <= trail[i - 1] + 1e-9);
}
