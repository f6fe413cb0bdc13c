// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace c2e {

// Counter-based generator: output i is a pure function of (seed, i), so
// streams can be replayed from a checkpoint and forked per purpose without
// any shared mutable state. The kernel is the splitmix64 finalizer over a
// Weyl sequence, which matches the reference splitmix64 output stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return at(pos_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two counter positions.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unbiased-enough bounded draw via 128-bit multiply-shift.
  uint64_t uniform_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Independent stream keyed by (seed, tag); fresh position.
  Rng derive(uint64_t tag) const {
    return Rng(mix(seed_ ^ mix(tag + 0x9E3779B97F4A7C15ULL)));
  }

  uint64_t seed() const { return seed_; }
  uint64_t position() const { return pos_; }
  void set_position(uint64_t p) { pos_ = p; }

 private:
  uint64_t at(uint64_t pos) const {
    return mix(seed_ + (pos + 1) * 0x9E3779B97F4A7C15ULL);
  }

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_;
  uint64_t pos_ = 0;
};

}  // namespace c2e
