// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace cbr {

/// Portable random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions below are written
/// out explicitly because the standard library ones are implementation
/// defined.
///
///   uniform()       (x >> 11) * 2^-53, in [0, 1)
///   uniform_int()   rejection sampling on the raw 64-bit output
///   normal()        Box-Muller, cosine branch only (two uniforms per draw)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic seed derivation for independent sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cbr
