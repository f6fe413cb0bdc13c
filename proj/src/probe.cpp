// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace c2e {

namespace {

uint64_t fnv_str(const std::string& s, uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::string ProbeReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["split_hash"] = split_hash;
  j["accuracy"] = accuracy;
  j["per_class_precision"] = per_class_precision;
  j["seed"] = seed;
  j["checkpoint_hash"] = checkpoint_hash;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  return j.dump(2);
}

Tensor extract_features(const C2EModel& model, const std::vector<Image>& images,
                        const std::string& pooling) {
  if (pooling != "mean" && pooling != "token0")
    throw ConfigError("extract_features: pooling must be mean|token0");
  NoGradGuard ng;
  const size_t c0 = model.config().schedule().latent_width();
  std::vector<double> out;
  out.reserve(images.size() * c0);
  // batched over images; deterministic order
  const size_t bs = 32;
  std::vector<size_t> idx;
  for (size_t start = 0; start < images.size(); start += bs) {
    idx.clear();
    for (size_t i = start; i < std::min(images.size(), start + bs); ++i) idx.push_back(i);
    Tensor batch = images_to_tensor(images, idx);
    LatentState z0 = model.encode_all(batch);
    Tensor feats = pooling == "mean" ? mean_rows(z0.tokens)
                                     : reshape(gather_rows(z0.tokens, {0}),
                                               {z0.tokens.dim(0), c0});
    out.insert(out.end(), feats.data().begin(), feats.data().end());
  }
  return Tensor::from_data({images.size(), c0}, std::move(out));
}

ProbeSplit make_stratified_split(const std::vector<int>& labels, double test_frac,
                                 uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw ConfigError("split: test_frac must lie in (0,1)");
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  ProbeSplit split;
  split.seed = seed;
  Rng rng(seed);
  for (auto& [cls, idx] : by_class) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_below(i)]);
    const size_t ntest = std::max<size_t>(1, static_cast<size_t>(
                                                 std::floor(test_frac * idx.size())));
    for (size_t i = 0; i < idx.size(); ++i)
      (i < ntest ? split.test_idx : split.train_idx).push_back(idx[i]);
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

ProbeReport linear_probe(const Tensor& features, const std::vector<int>& labels,
                         const ProbeSplit& split, const std::string& task) {
  // split hygiene: disjointness is part of every report
  {
    std::set<size_t> train(split.train_idx.begin(), split.train_idx.end());
    for (size_t i : split.test_idx)
      if (train.count(i))
        throw ConfigError("probe: train/test overlap at index " + std::to_string(i));
  }
  std::set<int> train_classes;
  for (size_t i : split.train_idx) train_classes.insert(labels[i]);
  if (train_classes.size() < 2)
    throw DegenerateSplitError("probe: train split has fewer than 2 classes");

  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  const size_t k = static_cast<size_t>(max_label) + 1;
  const size_t c = features.dim(1);

  Tensor xtrain = gather_rows(features, split.train_idx);
  std::vector<int> ytrain;
  for (size_t i : split.train_idx) ytrain.push_back(labels[i]);

  Tensor w = Tensor::zeros({k, c}, true);
  Tensor b = Tensor::zeros({k}, true);

  // full-batch Adam to convergence
  std::vector<double> mw(k * c, 0.0), vw(k * c, 0.0), mb(k, 0.0), vb(k, 0.0);
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, l2 = 1e-4;
  for (int it = 1; it <= 1000; ++it) {
    w.zero_grad();
    b.zero_grad();
    Tensor loss = add(softmax_cross_entropy(linear(xtrain, w, b), ytrain),
                      mul_scalar(sum_all(mul(w, w)), l2));
    backward(loss);
    auto upd = [&](Tensor& p, std::vector<double>& m, std::vector<double>& v) {
      auto& data = p.raw_data();
      const auto& g = p.grad();
      for (size_t i = 0; i < data.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(b1, it));
        const double vh = v[i] / (1 - std::pow(b2, it));
        data[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    };
    upd(w, mw, vw);
    upd(b, mb, vb);
  }

  // evaluate on the test side
  NoGradGuard ng;
  Tensor xtest = gather_rows(features, split.test_idx);
  Tensor logits = linear(xtest, w, b);
  size_t correct = 0;
  std::vector<size_t> pred_count(k, 0), true_pos(k, 0);
  for (size_t r = 0; r < split.test_idx.size(); ++r) {
    size_t arg = 0;
    for (size_t j = 1; j < k; ++j)
      if (logits.at({r, j}) > logits.at({r, arg})) arg = j;
    pred_count[arg]++;
    if (static_cast<int>(arg) == labels[split.test_idx[r]]) {
      ++correct;
      true_pos[arg]++;
    }
  }

  ProbeReport report;
  report.task = task;
  report.seed = split.seed;
  report.train_count = split.train_idx.size();
  report.test_count = split.test_idx.size();
  report.accuracy = static_cast<double>(correct) /
                    static_cast<double>(std::max<size_t>(1, split.test_idx.size()));
  for (size_t j = 0; j < k; ++j)
    report.per_class_precision.push_back(
        pred_count[j] ? static_cast<double>(true_pos[j]) / pred_count[j] : 0.0);

  std::ostringstream manifest;
  manifest << "train:";
  for (size_t i : split.train_idx) manifest << i << ",";
  manifest << ";test:";
  for (size_t i : split.test_idx) manifest << i << ",";
  report.split_hash = fnv_str(manifest.str());
  return report;
}

std::vector<FewShotSplit> make_fewshot_splits(const std::vector<std::string>& groups,
                                              size_t k,
                                              const std::vector<uint64_t>& seeds) {
  std::vector<std::string> unique = groups;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (k >= unique.size())
    throw ConfigError("fewshot: k=" + std::to_string(k) + " must be < " +
                      std::to_string(unique.size()) + " groups");
  std::vector<FewShotSplit> splits;
  for (uint64_t seed : seeds) {
    Rng rng(seed);
    std::vector<std::string> pool = unique;
    for (size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.uniform_below(i)]);
    FewShotSplit fs;
    fs.seed = seed;
    fs.train_groups.assign(pool.begin(), pool.begin() + static_cast<long>(k));
    fs.test_groups.assign(pool.begin() + static_cast<long>(k), pool.end());
    std::sort(fs.train_groups.begin(), fs.train_groups.end());
    std::sort(fs.test_groups.begin(), fs.test_groups.end());
    splits.push_back(std::move(fs));
  }
  return splits;
}

ProbeSplit split_from_groups(const ImageDataset& ds, const FewShotSplit& fs) {
  // group disjointness assertion
  for (const auto& g : fs.train_groups)
    if (std::find(fs.test_groups.begin(), fs.test_groups.end(), g) != fs.test_groups.end())
      throw ConfigError("fewshot: group " + g + " appears on both sides");
  ProbeSplit split;
  split.seed = fs.seed;
  for (size_t i = 0; i < ds.size(); ++i) {
    const std::string& g = ds.groups[i];
    if (std::find(fs.train_groups.begin(), fs.train_groups.end(), g) != fs.train_groups.end())
      split.train_idx.push_back(i);
    else if (std::find(fs.test_groups.begin(), fs.test_groups.end(), g) !=
             fs.test_groups.end())
      split.test_idx.push_back(i);
  }
  return split;
}

void export_embeddings(const C2EModel& model, const ImageDataset& ds,
                       const std::string& path) {
  Tensor feats = extract_features(model, ds.images);
  std::ofstream out(path);
  if (!out) throw IoError("embeddings: cannot write " + path);
  const size_t c = feats.dim(1);
  out << "label";
  for (size_t j = 0; j < c; ++j) out << ",feat_" << j;
  out << "\n";
  out.precision(17);
  for (size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (size_t j = 0; j < c; ++j) out << "," << feats.at({i, j});
    out << "\n";
  }
  if (!out) throw IoError("embeddings: short write to " + path);
}

double gini_coefficient(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double total = 0.0, weighted = 0.0;
  const size_t n = values.size();
  for (size_t i = 0; i < n; ++i) {
    total += values[i];
    weighted += static_cast<double>(i + 1) * values[i];
  }
  if (total <= 0.0) return 0.0;
  return (2.0 * weighted) / (static_cast<double>(n) * total) -
         (static_cast<double>(n) + 1.0) / static_cast<double>(n);
}

std::vector<double> export_attention(const C2EModel& model, const Image& image,
                                     size_t layer, const std::string& path_prefix) {
  const size_t depth = model.config().depth;
  if (layer >= depth)
    throw ConfigError("attention export: layer " + std::to_string(layer) +
                      " out of depth " + std::to_string(depth));
  NoGradGuard ng;
  Tensor batch = images_to_tensor({image}, {0});
  ForwardTrace trace;
  model.encode_all(batch, &trace);

  const size_t heads = trace.heads;
  const size_t n = trace.tokens;
  const size_t grid = model.config().grid();
  const auto& attn = trace.enc_attention.at(layer);  // heads*n*n

  std::vector<double> ginis;
  std::ofstream gini_csv(path_prefix + "_gini.csv");
  if (!gini_csv) throw IoError("attention export: cannot write gini csv");
  gini_csv << "head,gini\n";
  for (size_t h = 0; h < heads; ++h) {
    // mean over queries of incoming attention per key token
    std::vector<double> saliency(n, 0.0);
    for (size_t q = 0; q < n; ++q)
      for (size_t kk = 0; kk < n; ++kk)
        saliency[kk] += attn[h * n * n + q * n + kk];
    for (double& v : saliency) v /= static_cast<double>(n);

    const double g = gini_coefficient(saliency);
    ginis.push_back(g);
    gini_csv << h << "," << g << "\n";

    double lo = saliency[0], hi = saliency[0];
    for (double v : saliency) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::vector<uint8_t> gray(n);
    for (size_t i = 0; i < n; ++i)
      gray[i] = span > 0.0 ? static_cast<uint8_t>(
                                 std::lround((saliency[i] - lo) / span * 255.0))
                           : 0;
    write_pgm(path_prefix + "_head" + std::to_string(h) + ".pgm", grid, grid, gray);
  }
  return ginis;
}

}  // namespace c2e
