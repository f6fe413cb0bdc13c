// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen-encoder evaluation: feature extraction at mask ratio zero, linear
// probes, group-disjoint few-shot splits, and the embedding / attention
// saliency exports.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2e/image_io.hpp"
#include "c2e/model.hpp"

namespace c2e {

struct ProbeReport {
  std::string task;
  uint64_t split_hash = 0;  // FNV over the train/test index manifest
  double accuracy = 0.0;
  std::vector<double> per_class_precision;
  uint64_t seed = 0;
  uint64_t checkpoint_hash = 0;
  size_t train_count = 0, test_count = 0;

  std::string to_json() const;
};

struct ProbeSplit {
  std::vector<size_t> train_idx, test_idx;
  uint64_t seed = 0;
};

struct FewShotSplit {
  std::vector<std::string> train_groups, test_groups;
  uint64_t seed = 0;
};

// Per-image feature: mean over tokens of Z0 with every token visible.
// pooling: "mean" (default) or "token0" (single-token readout).
Tensor extract_features(const C2EModel& model, const std::vector<Image>& images,
                        const std::string& pooling = "mean");

// Class-stratified split with test_frac of each class held out.
ProbeSplit make_stratified_split(const std::vector<int>& labels, double test_frac,
                                 uint64_t seed);

// Multinomial logistic regression on frozen features (full-batch Adam).
// Throws DegenerateSplitError when the train side has fewer than 2 classes;
// throws ConfigError on train/test overlap.
ProbeReport linear_probe(const Tensor& features, const std::vector<int>& labels,
                         const ProbeSplit& split, const std::string& task = "probe");

// Per seed, sample k train groups uniformly without replacement.
std::vector<FewShotSplit> make_fewshot_splits(const std::vector<std::string>& groups,
                                              size_t k,
                                              const std::vector<uint64_t>& seeds);

// Index-level split for a dataset given a group-level few-shot split.
ProbeSplit split_from_groups(const ImageDataset& ds, const FewShotSplit& fs);

// CSV rows label,feat_0..feat_{C0-1}.
void export_embeddings(const C2EModel& model, const ImageDataset& ds,
                       const std::string& path);

// One PGM per head at the chosen encoder layer: mean-over-queries incoming
// attention per token, min-max scaled onto the patch grid. Returns the per-
// head Gini coefficients (also written to <prefix>_gini.csv).
std::vector<double> export_attention(const C2EModel& model, const Image& image,
                                     size_t layer, const std::string& path_prefix);

double gini_coefficient(std::vector<double> values);

}  // namespace c2e
