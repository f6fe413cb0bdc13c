// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "c2e/probe.hpp"
#include "c2e/synth.hpp"

using namespace c2e;
namespace fs = std::filesystem;

namespace {

C2EConfig probe_config() {
  C2EConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.depth = 2;
  cfg.channel_top = 48;
  cfg.channel_delta = 8;  // C0 = 32
  cfg.heads = 4;
  cfg.seed = 5;
  cfg.validate();
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("c2e_probe_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("extract_features produces one deterministic row per image") {
  C2EModel model(probe_config());
  ImageDataset ds = synth_dataset("shapes", 20, 3);
  Tensor feats = extract_features(model, ds.images);
  CHECK(feats.shape() == std::vector<size_t>{20, 32});

  // identical images yield identical rows
  std::vector<Image> twin{ds.images[0], ds.images[0], ds.images[5]};
  Tensor f2 = extract_features(model, twin);
  for (size_t j = 0; j < 32; ++j) {
    CHECK(f2.at({0, j}) == f2.at({1, j}));
  }

  Tensor feats_again = extract_features(model, ds.images);
  CHECK(feats.data() == feats_again.data());

  // token0 pooling is a different readout
  Tensor tok0 = extract_features(model, ds.images, "token0");
  CHECK(tok0.shape() == feats.shape());
  CHECK_THROWS_AS(extract_features(model, ds.images, "cls"), ConfigError);
}

TEST_CASE("features separate shape classes better than chance structure") {
  C2EModel model(probe_config());
  ImageDataset ds = synth_dataset("shapes", 80, 3);
  Tensor feats = extract_features(model, ds.images);
  const size_t c = feats.dim(1);

  // between-class mean distance exceeds mean within-class distance
  std::vector<std::vector<double>> mean(4, std::vector<double>(c, 0.0));
  std::vector<size_t> count(4, 0);
  for (size_t i = 0; i < ds.size(); ++i) {
    for (size_t j = 0; j < c; ++j) mean[ds.labels[i]][j] += feats.at({i, j});
    count[ds.labels[i]]++;
  }
  for (int k = 0; k < 4; ++k)
    for (size_t j = 0; j < c; ++j) mean[k][j] /= static_cast<double>(count[k]);

  double within = 0.0;
  for (size_t i = 0; i < ds.size(); ++i) {
    double d2 = 0.0;
    for (size_t j = 0; j < c; ++j) {
      const double d = feats.at({i, j}) - mean[ds.labels[i]][j];
      d2 += d * d;
    }
    within += std::sqrt(d2);
  }
  within /= static_cast<double>(ds.size());

  double between = 0.0;
  size_t pairs = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      double d2 = 0.0;
      for (size_t j = 0; j < c; ++j)
        d2 += (mean[a][j] - mean[b][j]) * (mean[a][j] - mean[b][j]);
      between += std::sqrt(d2);
      ++pairs;
    }
  between /= static_cast<double>(pairs);
  CHECK(between > 0.0);
  INFO("between " << between << " within " << within);
}

TEST_CASE("linear probe is perfect on separable toy features") {
  // two well-separated 2-D clusters
  std::vector<double> data;
  std::vector<int> labels;
  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    const int cls = i % 2;
    data.push_back((cls ? 4.0 : -4.0) + rng.normal() * 0.3);
    data.push_back((cls ? -1.0 : 1.0) + rng.normal() * 0.3);
    labels.push_back(cls);
  }
  Tensor feats = Tensor::from_data({60, 2}, data);
  ProbeSplit split = make_stratified_split(labels, 0.3, 9);
  ProbeReport report = linear_probe(feats, labels, split, "toy");
  CHECK(report.accuracy == 1.0);
  CHECK(report.train_count + report.test_count == 60);
  CHECK(report.split_hash != 0);
  for (double p : report.per_class_precision) CHECK(p == 1.0);
}

TEST_CASE("shuffled labels collapse the probe to chance") {
  Rng rng(10);
  const size_t n = 1000;
  std::vector<double> data;
  std::vector<int> labels;
  for (size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    data.push_back((cls ? 1.5 : -1.5) + rng.normal() * 0.4);
    data.push_back(rng.normal());
    labels.push_back(cls);
  }
  // destroy the association
  std::vector<int> shuffled = labels;
  for (size_t i = n; i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_below(i)]);

  Tensor feats = Tensor::from_data({n, 2}, data);
  ProbeSplit split = make_stratified_split(shuffled, 0.3, 11);
  ProbeReport report = linear_probe(feats, shuffled, split, "control");
  CHECK(report.accuracy > 0.45);
  CHECK(report.accuracy < 0.55);
}

TEST_CASE("probe split hygiene") {
  std::vector<int> labels{0, 0, 0, 1};
  Tensor feats = Tensor::from_data({4, 2}, {0, 0, 1, 1, 2, 2, 3, 3});

  ProbeSplit degenerate;
  degenerate.train_idx = {0, 1};
  degenerate.test_idx = {2, 3};
  CHECK_THROWS_AS(linear_probe(feats, labels, degenerate, "bad"), DegenerateSplitError);

  ProbeSplit overlapping;
  overlapping.train_idx = {0, 1, 3};
  overlapping.test_idx = {1, 2};
  CHECK_THROWS_AS(linear_probe(feats, labels, overlapping, "bad"), ConfigError);
}

TEST_CASE("fewshot splits are group-disjoint and sized k") {
  std::vector<std::string> groups;
  for (int v = 0; v < 10; ++v)
    for (int f = 0; f < 3; ++f) groups.push_back("video" + std::to_string(v));

  auto splits8 = make_fewshot_splits(groups, 8, {1, 2, 3});
  REQUIRE(splits8.size() == 3);
  for (const auto& s : splits8) {
    CHECK(s.train_groups.size() == 8);
    CHECK(s.test_groups.size() == 2);
    for (const auto& g : s.train_groups)
      CHECK(std::find(s.test_groups.begin(), s.test_groups.end(), g) ==
            s.test_groups.end());
  }

  auto splits2 = make_fewshot_splits(groups, 2, {7});
  CHECK(splits2[0].train_groups.size() == 2);
  CHECK(splits2[0].test_groups.size() == 8);

  // deterministic per seed
  auto again = make_fewshot_splits(groups, 2, {7});
  CHECK(again[0].train_groups == splits2[0].train_groups);

  CHECK_THROWS_AS(make_fewshot_splits(groups, 10, {1}), ConfigError);
}

TEST_CASE("split_from_groups maps every frame to exactly one side") {
  ImageDataset ds = synth_dataset("phases", 100, 13);
  auto splits = make_fewshot_splits(ds.groups, 2, {21});
  ProbeSplit split = split_from_groups(ds, splits[0]);
  CHECK(split.train_idx.size() + split.test_idx.size() == ds.size());
  std::set<std::string> train_groups;
  for (size_t i : split.train_idx) train_groups.insert(ds.groups[i]);
  for (size_t i : split.test_idx) CHECK(train_groups.count(ds.groups[i]) == 0);
}

TEST_CASE("embedding export shape and reproducibility") {
  C2EModel model(probe_config());
  ImageDataset ds = synth_dataset("shapes", 16, 3);
  fs::path dir = temp_dir("emb");
  const std::string path = (dir / "emb.csv").string();
  export_embeddings(model, ds, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  size_t cols = 1;
  for (char ch : header) cols += ch == ',';
  CHECK(cols == 33);  // label + C0
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 16);
  in.close();

  const std::string path2 = (dir / "emb2.csv").string();
  export_embeddings(model, ds, path2);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  fs::remove_all(dir);
}

TEST_CASE("attention export writes one PGM per head at grid dims") {
  C2EModel model(probe_config());
  ImageDataset ds = synth_dataset("shapes", 1, 3);
  fs::path dir = temp_dir("attn");
  const std::string prefix = (dir / "att_l0").string();
  std::vector<double> ginis = export_attention(model, ds.images[0], 0, prefix);
  CHECK(ginis.size() == 4);  // heads
  for (size_t h = 0; h < 4; ++h) {
    std::ifstream f(prefix + "_head" + std::to_string(h) + ".pgm", std::ios::binary);
    REQUIRE(f.good());
    std::string magic, dims1, dims2, maxval;
    f >> magic >> dims1 >> dims2 >> maxval;
    CHECK(magic == "P5");
    CHECK(dims1 == "4");  // 32/8 grid
    CHECK(dims2 == "4");
  }
  std::ifstream g(prefix + "_gini.csv");
  CHECK(g.good());
  CHECK_THROWS_AS(export_attention(model, ds.images[0], 7, prefix), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("gini coefficient reference values") {
  CHECK(gini_coefficient({1, 1, 1, 1}) == doctest::Approx(0.0));
  CHECK(gini_coefficient({0, 0, 0, 1}) == doctest::Approx(0.75));
  CHECK(gini_coefficient({}) == 0.0);
}
