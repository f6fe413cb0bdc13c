// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint binary layout:
//   magic "C2E1" (4 bytes), u32 version,
//   u64 config-JSON length + bytes,
//   u32 tensor count, then per tensor:
//     u32 name length + bytes, u32 rank, u64 extents, float64 payload.
// All integers and doubles little-endian. Optimizer moments, the step
// counter, and the rng state ride along as reserved-name tensors.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2e/model.hpp"
#include "c2e/optimizer.hpp"

namespace c2e {

struct NamedBlob {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double> data;
};

struct RawCheckpoint {
  std::string config_json;
  std::vector<NamedBlob> tensors;

  const NamedBlob* find(const std::string& name) const;
};

void write_checkpoint_file(const std::string& path, const RawCheckpoint& raw);
RawCheckpoint read_checkpoint_file(const std::string& path);

struct TrainState {
  C2EConfig cfg;
  C2EModel model;
  AdamW opt;
  uint64_t step = 0;       // training steps completed
  uint64_t rng_seed = 0;   // master stream state
  uint64_t rng_pos = 0;
};

void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace c2e
