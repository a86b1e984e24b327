// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cdcfm/error.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

struct StageLocation {
  int stage;   // 1-based
  double tau;  // rescaled time within the stage, in [0, 1]
};

/// Stage bookkeeping for a K-stage cascade: resolutions, the partition of
/// global time [0, 1], per-stage coupling noise and Euler step counts.
class StageSchedule {
 public:
  StageSchedule() = default;

  /// `boundaries` holds K+1 strictly increasing values from 0 to 1.
  StageSchedule(int stages, int base_height, int base_width, int channels, std::vector<double> boundaries,
                double sigma, double gamma, std::vector<int> steps)
      : stages_(stages),
        base_height_(base_height),
        base_width_(base_width),
        channels_(channels),
        boundaries_(std::move(boundaries)),
        sigma_(sigma),
        gamma_(gamma),
        steps_(std::move(steps)) {
    validate();
    sigma_k_.resize(stages_);
    for (int k = 1; k <= stages_; ++k) {
      sigma_k_[k - 1] = k == 1 ? sigma_ : sigma_ * std::pow(gamma_, -(k - 1));
    }
  }

  /// Equal-width partition t1^k - t0^k = 1/K.
  static StageSchedule uniform(int stages, int base_height, int base_width, int channels, double sigma,
                               double gamma, std::vector<int> steps) {
    if (stages < 1) throw ArgumentError("schedule needs at least one stage");
    std::vector<double> b(stages + 1);
    for (int k = 0; k <= stages; ++k) b[k] = static_cast<double>(k) / stages;
    b.front() = 0.0;
    b.back() = 1.0;
    return StageSchedule(stages, base_height, base_width, channels, std::move(b), sigma, gamma,
                         std::move(steps));
  }

  static StageSchedule uniform(int stages, int base_size, int channels, double sigma, double gamma, int steps) {
    return uniform(stages, base_size, base_size, channels, sigma, gamma, std::vector<int>(stages, steps));
  }

  int stages() const noexcept { return stages_; }
  int base_height() const noexcept { return base_height_; }
  int base_width() const noexcept { return base_width_; }
  int channels() const noexcept { return channels_; }
  double sigma() const noexcept { return sigma_; }
  double gamma() const noexcept { return gamma_; }
  const std::vector<double>& boundaries() const noexcept { return boundaries_; }
  const std::vector<double>& sigmas() const noexcept { return sigma_k_; }
  const std::vector<int>& steps() const noexcept { return steps_; }

  int height_at(int k) const { return base_height_ << (check_stage(k) - 1); }
  int width_at(int k) const { return base_width_ << (check_stage(k) - 1); }
  /// Pixel count times channels at stage k.
  std::size_t dim_at(int k) const {
    return static_cast<std::size_t>(channels_) * height_at(k) * width_at(k);
  }
  int steps_at(int k) const { return steps_[check_stage(k) - 1]; }

  /// sigma for k = 1, gamma^-(k-1) * sigma otherwise.
  double sigma_at(int k) const { return sigma_k_[check_stage(k) - 1]; }

  /// Stage containing global time t and the rescaled time inside it.
  /// Interior boundaries belong to the later stage; t = 1 maps to (K, 1).
  StageLocation locate(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ArgumentError("locate: t = " + std::to_string(t) + " outside [0, 1]");
    }
    if (t == 1.0) return {stages_, 1.0};
    auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
    const int k = static_cast<int>(it - boundaries_.begin());
    const double t0 = boundaries_[k - 1];
    const double t1 = boundaries_[k];
    const double tau = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    return {k, tau};
  }

  /// Inverse of locate: t = t0^k + tau (t1^k - t0^k).
  double global_time(int k, double tau) const {
    check_stage(k);
    return boundaries_[k - 1] + tau * (boundaries_[k] - boundaries_[k - 1]);
  }

  /// Empty image with stage-k geometry.
  Image zeros_at(int k) const { return Image(channels_, height_at(k), width_at(k), k); }

  bool matches(const Image& x, int k) const {
    return x.level() == k && x.channels() == channels_ && x.height() == height_at(k) &&
           x.width() == width_at(k);
  }

  /// Copy with a different diminish factor.
  StageSchedule with_gamma(double gamma) const {
    return StageSchedule(stages_, base_height_, base_width_, channels_, boundaries_, sigma_, gamma, steps_);
  }

  StageSchedule with_steps(std::vector<int> steps) const {
    return StageSchedule(stages_, base_height_, base_width_, channels_, boundaries_, sigma_, gamma_,
                         std::move(steps));
  }

 private:
  void validate() const {
    if (stages_ < 1) throw ArgumentError("schedule needs at least one stage");
    if (base_height_ < 1 || base_width_ < 1 || channels_ < 1) {
      throw ArgumentError("schedule base dimensions and channels must be positive");
    }
    if (boundaries_.size() != static_cast<std::size_t>(stages_) + 1) {
      throw ArgumentError("schedule needs K+1 time boundaries");
    }
    if (boundaries_.front() != 0.0 || boundaries_.back() != 1.0) {
      throw ArgumentError("time boundaries must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < boundaries_.size(); ++i) {
      if (!(boundaries_[i] > boundaries_[i - 1])) {
        throw ArgumentError("time boundaries must be strictly increasing");
      }
    }
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw ArgumentError("sigma must be positive");
    if (!(gamma_ >= 1.0) || !std::isfinite(gamma_)) throw ArgumentError("gamma must be >= 1");
    if (steps_.size() != static_cast<std::size_t>(stages_)) {
      throw ArgumentError("schedule needs one step count per stage");
    }
    for (int n : steps_) {
      if (n < 1) throw ArgumentError("per-stage step counts must be >= 1");
    }
  }

  int check_stage(int k) const {
    if (k < 1 || k > stages_) {
      throw ArgumentError("stage " + std::to_string(k) + " outside [1, " + std::to_string(stages_) + "]");
    }
    return k;
  }

  int stages_ = 1;
  int base_height_ = 1;
  int base_width_ = 1;
  int channels_ = 1;
  std::vector<double> boundaries_{0.0, 1.0};
  double sigma_ = 1.0;
  double gamma_ = 1.0;
  std::vector<double> sigma_k_{1.0};
  std::vector<int> steps_{1};
};

}  // namespace cdcfm
