// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2e/tensor.hpp"

namespace c2e {

// Row-major RGB in [0,1].
struct Image {
  size_t h = 0, w = 0;
  std::vector<double> rgb;  // h*w*3

  double& at(size_t y, size_t x, size_t c) { return rgb[(y * w + x) * 3 + c]; }
  double at(size_t y, size_t x, size_t c) const { return rgb[(y * w + x) * 3 + c]; }
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, size_t h, size_t w,
               const std::vector<uint8_t>& gray);

struct ImageDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> groups;
  std::vector<std::string> paths;

  size_t size() const { return images.size(); }
};

// Directory with labels.csv (path,label,group) written by the synth command.
ImageDataset load_labeled_dir(const std::string& dir);
// Kept rows of an ingest manifest CSV.
ImageDataset load_from_manifest(const std::string& csv_path);
// Either of the above, detected by header.
ImageDataset load_dataset(const std::string& path);

// Stack selected images into a [B,H,W,3] tensor.
Tensor images_to_tensor(const std::vector<Image>& images,
                        const std::vector<size_t>& indices);

uint64_t file_fnv1a(const std::string& path);

}  // namespace c2e
