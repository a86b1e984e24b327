// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "cdcfm/tensor.hpp"

namespace cdcfm {

/// Seeded random stream. Copying an Rng forks the stream at its current
/// position, which is how stage replays reproduce noise bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream keyed by several integers (seed, worker, index, ...).
  Rng(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    for (std::uint64_t v : key) {
      words.push_back(static_cast<std::uint32_t>(v));
      words.push_back(static_cast<std::uint32_t>(v >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t bits() { return engine_(); }

  /// Standard-normal image of the given geometry.
  template <typename Real = float>
  BasicImage<Real> normal_image(int channels, int height, int width, int level) {
    BasicImage<Real> out(channels, height, width, level);
    for (Real& v : out.data()) v = static_cast<Real>(normal());
    return out;
  }

  template <typename Real>
  BasicImage<Real> normal_like(const BasicImage<Real>& shape) {
    return normal_image<Real>(shape.channels(), shape.height(), shape.width(), shape.level());
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

}  // namespace cdcfm
