// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cdcfm/error.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

namespace detail {

// 2x2 block mean without level bookkeeping. The pairwise order (a+b)+(c+d)
// keeps the mean of four equal values exact.
template <typename Real>
BasicImage<Real> block_mean(const BasicImage<Real>& x, int out_level) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) {
    throw ShapeError("downsample needs even height and width, got " + x.shape_string());
  }
  const int h = x.height() / 2;
  const int w = x.width() / 2;
  BasicImage<Real> out(x.channels(), h, w, out_level);
  const Real quarter = Real(0.25);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const Real top = x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1);
        const Real bottom = x.at(c, 2 * y + 1, 2 * xx) + x.at(c, 2 * y + 1, 2 * xx + 1);
        out.at(c, y, xx) = (top + bottom) * quarter;
      }
    }
  }
  return out;
}

template <typename Real>
BasicImage<Real> replicate(const BasicImage<Real>& x, int out_level) {
  BasicImage<Real> out(x.channels(), 2 * x.height(), 2 * x.width(), out_level);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int xx = 0; xx < out.width(); ++xx) {
        out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Neighborhood averaging: each output pixel is the mean of a 2x2 input block.
template <typename Real>
BasicImage<Real> downsample(const BasicImage<Real>& x) {
  if (x.level() <= 1) {
    throw UnderflowError("cannot downsample below level 1 (input " + x.shape_string() + ")");
  }
  return detail::block_mean(x, x.level() - 1);
}

/// Neighborhood replication: each input pixel becomes a 2x2 block.
template <typename Real>
BasicImage<Real> upsample(const BasicImage<Real>& x) {
  return detail::replicate(x, x.level() + 1);
}

/// Iterated downsampling to `target_level`; identity when the levels match.
template <typename Real>
BasicImage<Real> composite_downsample(const BasicImage<Real>& x, int target_level) {
  if (target_level > x.level()) {
    throw ArgumentError("composite_downsample: target level " + std::to_string(target_level) +
                        " above input level " + std::to_string(x.level()));
  }
  BasicImage<Real> out = x;
  while (out.level() > target_level) out = downsample(out);
  return out;
}

/// Iterated replication up to `target_level` (the embedding into a finer grid).
template <typename Real>
BasicImage<Real> composite_upsample(const BasicImage<Real>& x, int target_level) {
  if (target_level < x.level()) {
    throw ArgumentError("composite_upsample: target level " + std::to_string(target_level) +
                        " below input level " + std::to_string(x.level()));
  }
  BasicImage<Real> out = x;
  while (out.level() < target_level) out = upsample(out);
  return out;
}

/// upsample(downsample(x)): the orthogonal projection onto block-constant images.
template <typename Real>
BasicImage<Real> project(const BasicImage<Real>& x) {
  return upsample(downsample(x));
}

template <typename Real>
struct BasicDetailDecomposition {
  /// details[k-1] holds the level-k detail embedded at the input resolution.
  std::vector<BasicImage<Real>> details;
  /// Running sum of the details.
  BasicImage<Real> reconstructed;
};

using DetailDecomposition = BasicDetailDecomposition<float>;

/// Telescoping split x = sum_k (x~(k) - x~(k-1)) with x~(k) the level-k
/// projection embedded at full resolution and x~(0) = 0.
///
/// Levels are counted relative to the input: detail 1 is the coarsest
/// (2^(levels-1) downsamplings), detail `levels` the finest.
template <typename Real>
BasicDetailDecomposition<Real> detail_decompose(const BasicImage<Real>& x, int levels) {
  if (levels < 1) throw ArgumentError("detail_decompose: levels must be >= 1");
  const int factor = 1 << (levels - 1);
  if (x.height() % factor != 0 || x.width() % factor != 0) {
    throw ShapeError("detail_decompose: " + x.shape_string() + " not divisible by " +
                     std::to_string(factor));
  }
  // Work on relative levels 1..levels so the decomposition does not depend
  // on how deep the input sits in some larger pyramid.
  BasicImage<Real> top = x;
  top.set_level(levels);
  std::vector<BasicImage<Real>> coarse(levels);
  coarse[levels - 1] = top;
  for (int k = levels - 1; k >= 1; --k) coarse[k - 1] = detail::block_mean(coarse[k], k);

  BasicDetailDecomposition<Real> out;
  out.details.reserve(levels);
  BasicImage<Real> previous = BasicImage<Real>::zeros_like(top);
  for (int k = 1; k <= levels; ++k) {
    BasicImage<Real> embedded = composite_upsample(coarse[k - 1], levels);
    BasicImage<Real> detail = embedded - previous;
    detail.set_level(x.level());
    out.details.push_back(std::move(detail));
    previous = std::move(embedded);
  }
  out.reconstructed = BasicImage<Real>::zeros_like(x);
  for (const auto& d : out.details) out.reconstructed = out.reconstructed + d;
  return out;
}

}  // namespace cdcfm
