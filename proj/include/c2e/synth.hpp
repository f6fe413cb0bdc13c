// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "c2e/image_io.hpp"

namespace c2e {

// Deterministic 32x32 RGB generators.
//   textures: band-limited noise fields for reconstruction pretraining
//   shapes:   4 balanced classes (disk/bar/cross/ring) for probing
//   phases:   10 "videos" of n/10 frames with 3 latent phase labels
ImageDataset synth_dataset(const std::string& kind, size_t n, uint64_t seed);

// Writes PPM frames plus labels.csv; phases go into per-video subdirectories.
void save_dataset(const ImageDataset& ds, const std::string& dir);

}  // namespace c2e
