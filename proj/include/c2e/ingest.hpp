// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frame ingestion: fixed-rate sampling over per-group directories,
// average-hash deduplication, holdout exclusion, and the manifest CSV.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2e/image_io.hpp"

namespace c2e {

struct FrameEntry {
  std::string path;
  std::string group;
  uint64_t frame_idx = 0;  // position in the group's sorted frame order
  uint64_t hash = 0;       // 8x8 average hash
  bool kept = false;
};

struct FrameManifest {
  std::vector<FrameEntry> entries;
  size_t every_k = 1;
  int dedup_threshold = -1;  // -1: dedup not applied yet
  std::vector<std::string> excluded_groups;
};

// 8x8 average hash over the grayscale box-downsampled image.
uint64_t average_hash(const Image& img);
int hamming_distance(uint64_t a, uint64_t b);

// dir holds one subdirectory per group with ordered .ppm frames; every k-th
// frame per group is kept. Hashes are computed for every listed frame.
FrameManifest sample_frames(const std::string& dir, size_t every_k);

// Greedy scan in frame order: drop any kept frame within Hamming distance
// <= threshold of an earlier kept frame in the same group.
FrameManifest dedup(const FrameManifest& manifest, int threshold);

// Remove listed groups entirely; unknown names warn on stderr.
FrameManifest exclude(const FrameManifest& manifest,
                      const std::vector<std::string>& holdout);

void save_manifest_csv(const FrameManifest& manifest, const std::string& path);
FrameManifest load_manifest_csv(const std::string& path);

}  // namespace c2e
