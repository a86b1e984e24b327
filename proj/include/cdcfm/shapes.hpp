// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "cdcfm/error.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/tensor.hpp"
#include "cdcfm/train.hpp"

namespace cdcfm {

enum class ShapeFamily { Disc, Square, Ring, Cross, TwoDisc, DiagonalBar, CheckerPatch, CornerBlob };

inline constexpr int kShapeFamilies = 8;

inline constexpr std::array<std::string_view, kShapeFamilies> kShapeFamilyNames = {
    "disc", "square", "ring", "cross", "two_disc", "diagonal_bar", "checker_patch", "corner_blob"};

inline ShapeFamily family_of(int label) { return static_cast<ShapeFamily>(label % kShapeFamilies); }

/// One synthetic image: a shape of the label's family on a -1 background.
/// Position, size and intensity are drawn from the stream keyed by (seed, index).
inline Image generate_shape(int label, int size, int channels, int level, std::uint64_t seed, std::uint64_t index) {
  if (label < 0) throw ArgumentError("generate_shape: label must be >= 0");
  if (size < 4) throw ArgumentError("generate_shape: size must be >= 4");
  Rng rng({seed, index});
  const double s = size;
  const double cx = rng.uniform(0.35, 0.65) * s;
  const double cy = rng.uniform(0.35, 0.65) * s;
  const double r = rng.uniform(0.16, 0.28) * s;
  const bool vertical = rng.uniform() < 0.5;
  const int corner = static_cast<int>(rng.index(4));
  std::vector<double> intensity(channels);
  const double base = rng.uniform(0.3, 1.0);
  for (double& v : intensity) v = std::clamp(base + rng.uniform(-0.15, 0.15), -1.0, 1.0);

  auto inside = [&](double px, double py) {
    const double dx = px - cx;
    const double dy = py - cy;
    const double dist2 = dx * dx + dy * dy;
    switch (family_of(label)) {
      case ShapeFamily::Disc:
        return dist2 <= r * r;
      case ShapeFamily::Square:
        return std::abs(dx) <= r && std::abs(dy) <= r;
      case ShapeFamily::Ring:
        return dist2 <= r * r && dist2 >= 0.3 * r * r;
      case ShapeFamily::Cross: {
        const double arm = r / 3.0;
        return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
      }
      case ShapeFamily::TwoDisc: {
        const double off = 0.9 * r;
        const double ox = vertical ? 0.0 : off;
        const double oy = vertical ? off : 0.0;
        const double rr = 0.45 * r * 0.45 * r * 1.5;
        const double a = (dx - ox) * (dx - ox) + (dy - oy) * (dy - oy);
        const double b = (dx + ox) * (dx + ox) + (dy + oy) * (dy + oy);
        return a <= rr || b <= rr;
      }
      case ShapeFamily::DiagonalBar: {
        const double along = (dx + dy) / std::sqrt(2.0);
        const double across = (dx - dy) / std::sqrt(2.0);
        return std::abs(across) <= r / 3.0 && std::abs(along) <= 1.3 * r;
      }
      case ShapeFamily::CheckerPatch: {
        if (std::abs(dx) > r || std::abs(dy) > r) return false;
        const double cell = r / 2.0;
        const int ix = static_cast<int>(std::floor((dx + r) / cell));
        const int iy = static_cast<int>(std::floor((dy + r) / cell));
        return (ix + iy) % 2 == 0;
      }
      case ShapeFamily::CornerBlob: {
        const double bx = (corner & 1) ? s - 0.15 * s : 0.15 * s;
        const double by = (corner & 2) ? s - 0.15 * s : 0.15 * s;
        const double ex = px - bx;
        const double ey = py - by;
        return ex * ex + ey * ey <= 1.4 * r * 1.4 * r;
      }
    }
    return false;
  };

  Image img(channels, size, size, level, -1.0f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside(x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(intensity[c]);
    }
  }
  return img;
}

struct ShapesSpec {
  int num_classes = 8;
  int per_class = 64;
  int size = 32;
  int channels = 1;
  int level = 3;  // pyramid level tag of the images
  std::uint64_t seed = 0;
};

/// Images are class-blocked: index i has label i / per_class.
inline std::vector<LabeledImage> generate_shapes(const ShapesSpec& spec) {
  if (spec.num_classes < 1 || spec.per_class < 0) throw ArgumentError("generate_shapes: bad class counts");
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.per_class);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int j = 0; j < spec.per_class; ++j) {
      const auto index = static_cast<std::uint64_t>(c) * spec.per_class + j;
      out.push_back({generate_shape(c, spec.size, spec.channels, spec.level, spec.seed, index), c});
    }
  }
  return out;
}

/// Per-class pixel means, indexed by label.
inline std::vector<Image> class_means(std::span<const LabeledImage> data, int num_classes) {
  if (data.empty()) throw ArgumentError("class_means: empty dataset");
  std::vector<ImageD> sums(num_classes, ImageD::zeros_like(data.front().image.cast<double>()));
  std::vector<int> counts(num_classes, 0);
  for (const LabeledImage& item : data) {
    if (!item.label || *item.label < 0 || *item.label >= num_classes) continue;
    const int c = *item.label;
    ++counts[c];
    for (std::size_t i = 0; i < item.image.size(); ++i) sums[c][i] += item.image[i];
  }
  std::vector<Image> out;
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] > 0) {
      for (std::size_t i = 0; i < sums[c].size(); ++i) sums[c][i] /= counts[c];
    }
    out.push_back(sums[c].cast<float>());
  }
  return out;
}

}  // namespace cdcfm
