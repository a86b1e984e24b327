// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdcfm/error.hpp"

namespace cdcfm {

/// Dense channels x height x width grid tagged with its pyramid level.
///
/// Storage is channel-major, row-major. The level is carried explicitly so
/// pyramid operators can validate their preconditions without knowing the
/// schedule the image came from.
template <std::floating_point Real>
class BasicImage {
 public:
  using value_type = Real;

  BasicImage() = default;

  BasicImage(int channels, int height, int width, int level, Real fill = Real(0))
      : channels_(channels), height_(height), width_(width), level_(level) {
    if (channels <= 0 || height <= 0 || width <= 0) {
      throw ShapeError("image dimensions must be positive, got " + shape_string());
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  BasicImage(int channels, int height, int width, int level, std::vector<Real> data)
      : BasicImage(channels, height, width, level) {
    if (data.size() != data_.size()) {
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match " +
                       shape_string());
    }
    data_ = std::move(data);
  }

  /// Zero image with the same shape and level as `other`.
  template <typename Other>
  static BasicImage zeros_like(const BasicImage<Other>& other) {
    return BasicImage(other.channels(), other.height(), other.width(), other.level());
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int level() const noexcept { return level_; }
  void set_level(int level) noexcept { level_ = level; }

  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  const std::vector<Real>& vector() const noexcept { return data_; }

  std::span<Real> plane(int c) noexcept { return std::span<Real>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const Real> plane(int c) const noexcept {
    return std::span<const Real>(data_).subspan(c * plane_size(), plane_size());
  }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  Real& at(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  Real at(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  /// Same channels, height, width and level.
  template <typename Other>
  bool same_shape(const BasicImage<Other>& other) const noexcept {
    return channels_ == other.channels() && height_ == other.height() && width_ == other.width() &&
           level_ == other.level();
  }

  template <std::floating_point To>
  BasicImage<To> cast() const {
    std::vector<To> out(data_.begin(), data_.end());
    return BasicImage<To>(channels_, height_, width_, level_, std::move(out));
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_) +
           "@L" + std::to_string(level_);
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  int level_ = 1;
  std::vector<Real> data_;
};

using Image = BasicImage<float>;
using ImageD = BasicImage<double>;

template <typename A, typename B>
void require_same_shape(const BasicImage<A>& a, const BasicImage<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename Real>
bool all_finite(const BasicImage<Real>& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](Real v) { return std::isfinite(v); });
}

/// Bitwise equality of shape and payload (distinguishes +0 and -0).
template <typename Real>
bool bit_equal(const BasicImage<Real>& a, const BasicImage<Real>& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(Real)) == 0;
}

template <typename Real>
double squared_norm(const BasicImage<Real>& x) {
  double acc = 0.0;
  for (Real v : x.data()) acc += static_cast<double>(v) * v;
  return acc;
}

template <typename Real>
double dot(const BasicImage<Real>& a, const BasicImage<Real>& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename Real>
BasicImage<Real> operator+(const BasicImage<Real>& a, const BasicImage<Real>& b) {
  require_same_shape(a, b, "add");
  BasicImage<Real> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename Real>
BasicImage<Real> operator-(const BasicImage<Real>& a, const BasicImage<Real>& b) {
  require_same_shape(a, b, "subtract");
  BasicImage<Real> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <typename Real>
BasicImage<Real> operator*(Real s, const BasicImage<Real>& a) {
  BasicImage<Real> out = a;
  for (Real& v : out.data()) v *= s;
  return out;
}

/// y += s * x
template <typename Real>
void axpy(Real s, const BasicImage<Real>& x, BasicImage<Real>& y) {
  require_same_shape(x, y, "axpy");
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += s * xs[i];
}

/// Linear path (1 - tau) * x0 + tau * x1.
template <typename Real>
BasicImage<Real> lerp(const BasicImage<Real>& x0, const BasicImage<Real>& x1, double tau) {
  require_same_shape(x0, x1, "lerp");
  const Real a = static_cast<Real>(1.0 - tau);
  const Real b = static_cast<Real>(tau);
  BasicImage<Real> out = BasicImage<Real>::zeros_like(x0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * x1[i];
  return out;
}

}  // namespace cdcfm
