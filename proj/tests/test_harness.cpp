// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "c2e/synth.hpp"
#include "c2e/train.hpp"

using namespace c2e;
namespace fs = std::filesystem;

namespace {

C2EConfig tiny_config() {
  C2EConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;  // 16 tokens
  cfg.depth = 2;
  cfg.channel_top = 48;
  cfg.channel_delta = 8;  // 48 -> 40 -> 32
  cfg.heads = 4;
  cfg.batch_size = 4;
  cfg.steps = 8;
  cfg.log_every = 2;
  cfg.seed = 2024;
  cfg.validate();
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("c2e_harness_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config validation rejects bad values") {
  C2EConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());

  C2EConfig bad = cfg;
  bad.mask_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.channel_delta = 32;  // 48 - 2*32 underflows
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.patch_size = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.loss = "huber";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.heads = 5;  // 48 % 5 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.conditional_ratio = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config JSON round trip") {
  C2EConfig cfg = tiny_config();
  cfg.conditional_ratio = 0.5;
  cfg.loss = "l2";
  C2EConfig back = C2EConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.conditional_ratio == 0.5);
}

TEST_CASE("synth shapes are balanced and deterministic") {
  ImageDataset ds = synth_dataset("shapes", 400, 7);
  REQUIRE(ds.size() == 400);
  size_t counts[4] = {0, 0, 0, 0};
  for (int l : ds.labels) counts[l]++;
  for (size_t c : counts) CHECK(c == 100);

  ImageDataset again = synth_dataset("shapes", 400, 7);
  for (size_t i = 0; i < 400; ++i) CHECK(again.images[i].rgb == ds.images[i].rgb);

  ImageDataset other = synth_dataset("shapes", 400, 8);
  bool any_diff = false;
  for (size_t i = 0; i < 400 && !any_diff; ++i)
    any_diff = other.images[i].rgb != ds.images[i].rgb;
  CHECK(any_diff);

  CHECK_THROWS_AS(synth_dataset("fractals", 10, 1), ConfigError);
}

TEST_CASE("synth class means are pairwise distinguishable") {
  ImageDataset ds = synth_dataset("shapes", 400, 3);
  std::vector<std::vector<double>> means(4, std::vector<double>(32 * 32 * 3, 0.0));
  for (size_t i = 0; i < ds.size(); ++i)
    for (size_t j = 0; j < means[0].size(); ++j)
      means[ds.labels[i]][j] += ds.images[i].rgb[j] / 100.0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      double l2 = 0.0;
      for (size_t j = 0; j < means[0].size(); ++j)
        l2 += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
      CHECK(std::sqrt(l2) > 0.5);
    }
}

TEST_CASE("synth phases cover 10 videos with 3 phase labels") {
  ImageDataset ds = synth_dataset("phases", 300, 11);
  REQUIRE(ds.size() == 300);
  std::set<std::string> groups(ds.groups.begin(), ds.groups.end());
  CHECK(groups.size() == 10);
  std::set<int> labels(ds.labels.begin(), ds.labels.end());
  CHECK(labels == std::set<int>{0, 1, 2});
}

TEST_CASE("dataset save/load round trip") {
  fs::path dir = temp_dir("dataset");
  ImageDataset ds = synth_dataset("shapes", 12, 5);
  save_dataset(ds, dir.string());
  ImageDataset back = load_labeled_dir(dir.string());
  REQUIRE(back.size() == 12);
  CHECK(back.labels == ds.labels);
  // 8-bit quantization bound
  for (size_t i = 0; i < back.size(); ++i)
    for (size_t j = 0; j < back.images[i].rgb.size(); ++j)
      CHECK(std::abs(back.images[i].rgb[j] - ds.images[i].rgb[j]) <= 0.5 / 255.0 + 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit-exactly") {
  C2EConfig cfg = tiny_config();
  TrainState state = fresh_train_state(cfg);
  ImageDataset data = synth_dataset("textures", 16, 3);
  // advance a few steps so moments and counters are non-trivial
  state.cfg.steps = 3;
  train_loop(state, data);

  fs::path dir = temp_dir("ckpt");
  const std::string path = (dir / "model.c2e").string();
  save_checkpoint(path, state);
  TrainState back = load_checkpoint(path);
  CHECK(back.step == state.step);
  CHECK(back.rng_seed == state.rng_seed);

  Tensor batch = images_to_tensor(data.images, {0, 1});
  Rng mask_rng(99);
  MaskPlan plan = plan_mask(cfg.token_count(), 0.75, mask_rng);
  Rng n1(1), n2(1);
  auto a = state.model.forward_loss(batch, plan, n1, false);
  auto b = back.model.forward_loss(batch, plan, n2, false);
  REQUIRE(a.pred.size() == b.pred.size());
  for (size_t i = 0; i < a.pred.size(); ++i)
    CHECK(a.pred.data()[i] == b.pred.data()[i]);
  CHECK(a.loss.value() == b.loss.value());
  fs::remove_all(dir);
}

TEST_CASE("truncated checkpoint raises a clean format error") {
  C2EConfig cfg = tiny_config();
  TrainState state = fresh_train_state(cfg);
  fs::path dir = temp_dir("trunc");
  const std::string path = (dir / "model.c2e").string();
  save_checkpoint(path, state);

  const auto full = fs::file_size(path);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(full / 2);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  in.close();
  const std::string cut = (dir / "cut.c2e").string();
  std::ofstream out(cut, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.close();

  CHECK_THROWS_AS(load_checkpoint(cut), IoError);

  std::ofstream bad((dir / "bad.c2e").string(), std::ios::binary);
  bad << "NOPE" << std::string(64, '\0');
  bad.close();
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.c2e").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("zero steps leaves the checkpoint at initialization") {
  C2EConfig cfg = tiny_config();
  cfg.steps = 0;
  TrainState state = fresh_train_state(cfg);
  ParamRegistry before = state.model.params();
  std::vector<std::vector<double>> snapshot;
  for (const auto& [name, t] : before.items) snapshot.push_back(t.data());

  ImageDataset data = synth_dataset("textures", 8, 3);
  TrainResult result = train_loop(state, data);
  CHECK(result.final_step == 0);
  CHECK(state.step == 0);
  ParamRegistry after = state.model.params();
  for (size_t i = 0; i < after.items.size(); ++i)
    CHECK(after.items[i].second.data() == snapshot[i]);
}

TEST_CASE("fixed seed gives identical metrics across two runs") {
  C2EConfig cfg = tiny_config();
  ImageDataset data = synth_dataset("textures", 16, 3);
  TrainState a = fresh_train_state(cfg);
  TrainState b = fresh_train_state(cfg);
  TrainResult ra = train_loop(a, data);
  TrainResult rb = train_loop(b, data);
  REQUIRE(ra.rows.size() == rb.rows.size());
  for (size_t i = 0; i < ra.rows.size(); ++i) {
    CHECK(ra.rows[i].step == rb.rows[i].step);
    CHECK(ra.rows[i].loss == rb.rows[i].loss);
    CHECK(ra.rows[i].layer_entropy == rb.rows[i].layer_entropy);
    CHECK(ra.rows[i].kt_mean == rb.rows[i].kt_mean);
    CHECK(ra.rows[i].grad_norm == rb.rows[i].grad_norm);
  }
}

TEST_CASE("resume equals an uninterrupted run bit for bit") {
  C2EConfig cfg = tiny_config();
  ImageDataset data = synth_dataset("textures", 16, 3);

  // uninterrupted: 8 steps
  TrainState straight = fresh_train_state(cfg);
  TrainResult rs = train_loop(straight, data);

  // interrupted: 4 steps, checkpoint, reload, 4 more
  TrainState first = fresh_train_state(cfg);
  train_loop(first, data, 4);
  fs::path dir = temp_dir("resume");
  const std::string path = (dir / "mid.c2e").string();
  save_checkpoint(path, first);
  TrainState second = load_checkpoint(path);
  CHECK(second.step == 4);
  TrainResult rr = train_loop(second, data);

  ParamRegistry pa = straight.model.params();
  ParamRegistry pb = second.model.params();
  for (size_t i = 0; i < pa.items.size(); ++i)
    CHECK(pa.items[i].second.data() == pb.items[i].second.data());
  CHECK(rs.final_loss == rr.final_loss);
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with a divergence report") {
  C2EConfig cfg = tiny_config();
  TrainState state = fresh_train_state(cfg);
  ImageDataset data = synth_dataset("textures", 8, 3);
  // poison one weight
  ParamRegistry reg = state.model.params();
  reg.find("dec.head.w").raw_data()[0] = std::nan("");
  try {
    train_loop(state, data);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.step == 0);
  }
}

TEST_CASE("metrics csv has the fixed header and deterministic body") {
  C2EConfig cfg = tiny_config();
  ImageDataset data = synth_dataset("textures", 16, 3);
  TrainState state = fresh_train_state(cfg);
  TrainResult result = train_loop(state, data);

  fs::path dir = temp_dir("metrics");
  write_metrics_csv((dir / "metrics.csv").string(), result.rows, cfg.depth);
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss,H_0,H_1,kT_mean,grad_norm,ms");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == result.rows.size());
  fs::remove_all(dir);
}

TEST_CASE("plain-ViT baseline builds from the same config with one flag") {
  C2EConfig cfg = tiny_config();
  cfg.baseline_vit = true;
  TrainState state = fresh_train_state(cfg);
  ImageDataset data = synth_dataset("textures", 8, 3);
  state.cfg.steps = 2;
  TrainResult r = train_loop(state, data);
  CHECK(std::isfinite(r.final_loss));
  // widths still follow the schedule
  ParamRegistry reg = state.model.params();
  CHECK(reg.find("enc.block0.mlp.w1").shape()[1] == 48);
  CHECK_THROWS_AS(reg.find("enc.block0.d"), ConfigError);  // no compression maps
}
