// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace c2e {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Cholesky factorization failed after jitter was applied.
struct NotPositiveDefiniteError : Error {
  size_t pivot;
  NotPositiveDefiniteError(const std::string& msg, size_t pivot_index)
      : Error(msg), pivot(pivot_index) {}
};

// Bad configuration value or inconsistent schedule.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values encountered during a forward/training step.
struct DivergenceError : Error {
  long layer;  // -1 when not layer-specific
  long step;   // -1 when not known
  DivergenceError(const std::string& msg, long layer_index = -1,
                  long step_index = -1)
      : Error(msg), layer(layer_index), step(step_index) {}
};

// File format or I/O failure.
struct IoError : Error {
  using Error::Error;
};

// Channel partition is not a disjoint cover.
struct PartitionError : Error {
  using Error::Error;
};

// Empty directory or unreadable frame data during ingestion.
struct IngestError : Error {
  using Error::Error;
};

// Probe split with fewer than two classes on the train side.
struct DegenerateSplitError : Error {
  using Error::Error;
};

// f(x) evaluated to a non-finite value inside grad_check.
struct EvalError : Error {
  using Error::Error;
};

}  // namespace c2e
