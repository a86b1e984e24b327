// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

struct ModelConfig {
  int channels = 1;
  int hidden_channels = 64;
  int depth = 6;  // number of 3x3 convolutions, >= 2
  int embed_dim = 64;
  int num_classes = 8;
  int base_resolution = 8;  // image height at level 1; r_k = base_resolution * 2^(k-1)

  void validate() const {
    if (channels < 1 || hidden_channels < 1) throw ArgumentError("model channels must be positive");
    if (depth < 2) throw ArgumentError("model depth must be >= 2");
    if (embed_dim < 2 || embed_dim % 2 != 0) throw ArgumentError("embed_dim must be a positive even number");
    if (num_classes < 0) throw ArgumentError("num_classes must be >= 0");
    if (base_resolution < 1) throw ArgumentError("base_resolution must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

enum class LossReduction {
  Sum,           // per-sample loss summed over pixels
  PerPixelMean,  // per-sample loss divided by its pixel count
};

/// Interleaved sin/cos features at frequencies 2^j, j = 0 .. dim/2 - 1.
inline std::vector<double> sinusoidal_features(double value, int dim) {
  std::vector<double> out(dim);
  double freq = 1.0;
  for (int j = 0; j < dim / 2; ++j) {
    out[2 * j] = std::sin(freq * value);
    out[2 * j + 1] = std::cos(freq * value);
    freq *= 2.0;
  }
  return out;
}

namespace detail {

// Unfolds 3x3 neighborhoods: col[(i * 9 + tap) * plane + p] is input channel i
// at pixel p shifted by tap, zero outside the image.
template <typename Real>
void im2col3x3(const Real* in, int cin, int h, int w, Real* col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < cin; ++i) {
    const Real* in_i = in + i * plane;
    for (int tap = 0; tap < 9; ++tap) {
      const int dy = tap / 3 - 1;
      const int dx = tap % 3 - 1;
      Real* dst = col + (static_cast<std::size_t>(i) * 9 + tap) * plane;
      for (int y = 0; y < h; ++y) {
        Real* row = dst + static_cast<std::size_t>(y) * w;
        const int sy = y + dy;
        if (sy < 0 || sy >= h) {
          std::fill(row, row + w, Real(0));
          continue;
        }
        const Real* src = in_i + static_cast<std::size_t>(sy) * w;
        for (int x = 0; x < w; ++x) {
          const int sx = x + dx;
          row[x] = (sx >= 0 && sx < w) ? src[sx] : Real(0);
        }
      }
    }
  }
}

// Inverse scatter of im2col3x3: d_in += fold(d_col).
template <typename Real>
void col2im3x3(const Real* d_col, int cin, int h, int w, Real* d_in) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < cin; ++i) {
    Real* d_in_i = d_in + i * plane;
    for (int tap = 0; tap < 9; ++tap) {
      const int dy = tap / 3 - 1;
      const int dx = tap % 3 - 1;
      const Real* src = d_col + (static_cast<std::size_t>(i) * 9 + tap) * plane;
      const int y0 = std::max(0, -dy);
      const int y1 = std::min(h, h - dy);
      const int x0 = std::max(0, -dx);
      const int x1 = std::min(w, w - dx);
      for (int y = y0; y < y1; ++y) {
        const Real* row = src + static_cast<std::size_t>(y) * w;
        Real* dst = d_in_i + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x0; x < x1; ++x) dst[x] += row[x];
      }
    }
  }
}

// out[o] = bias[o] + sum_j kern[o][j] * col[j] with j = (i, tap).
template <typename Real>
void conv3x3_forward(const Real* in, int cin, int h, int w, const Real* kern, const Real* bias, int cout,
                     Real* out, std::vector<Real>& col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t taps = static_cast<std::size_t>(cin) * 9;
  col.resize(taps * plane);
  im2col3x3(in, cin, h, w, col.data());
  int o = 0;
  for (; o + 4 <= cout; o += 4) {
    Real* r0 = out + (o + 0) * plane;
    Real* r1 = out + (o + 1) * plane;
    Real* r2 = out + (o + 2) * plane;
    Real* r3 = out + (o + 3) * plane;
    std::fill(r0, r0 + plane, bias[o + 0]);
    std::fill(r1, r1 + plane, bias[o + 1]);
    std::fill(r2, r2 + plane, bias[o + 2]);
    std::fill(r3, r3 + plane, bias[o + 3]);
    for (std::size_t j = 0; j < taps; ++j) {
      const Real w0 = kern[(o + 0) * taps + j];
      const Real w1 = kern[(o + 1) * taps + j];
      const Real w2 = kern[(o + 2) * taps + j];
      const Real w3 = kern[(o + 3) * taps + j];
      const Real* c = col.data() + j * plane;
#pragma omp simd
      for (std::size_t p = 0; p < plane; ++p) {
        const Real v = c[p];
        r0[p] += w0 * v;
        r1[p] += w1 * v;
        r2[p] += w2 * v;
        r3[p] += w3 * v;
      }
    }
  }
  for (; o < cout; ++o) {
    Real* r = out + o * plane;
    std::fill(r, r + plane, bias[o]);
    for (std::size_t j = 0; j < taps; ++j) {
      const Real wk = kern[o * taps + j];
      const Real* c = col.data() + j * plane;
#pragma omp simd
      for (std::size_t p = 0; p < plane; ++p) r[p] += wk * c[p];
    }
  }
}

// Accumulates d_in (optional), d_kern and d_bias from d_out. `col` must hold
// the im2col unfolding of `in` on entry.
template <typename Real>
void conv3x3_backward(const std::vector<Real>& col, int cin, int h, int w, const Real* kern, int cout,
                      const Real* d_out, Real* d_in, Real* d_kern, Real* d_bias, std::vector<Real>& d_col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t taps = static_cast<std::size_t>(cin) * 9;
  for (int o = 0; o < cout; ++o) {
    const Real* g = d_out + o * plane;
    Real bsum = 0;
#pragma omp simd reduction(+ : bsum)
    for (std::size_t p = 0; p < plane; ++p) bsum += g[p];
    d_bias[o] += bsum;
    for (std::size_t j = 0; j < taps; ++j) {
      const Real* c = col.data() + j * plane;
      Real s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < plane; ++p) s += g[p] * c[p];
      d_kern[o * taps + j] += s;
    }
  }
  if (!d_in) return;
  d_col.assign(taps * plane, Real(0));
  for (std::size_t j = 0; j < taps; ++j) {
    Real* dc = d_col.data() + j * plane;
    int o = 0;
    for (; o + 4 <= cout; o += 4) {
      const Real w0 = kern[(o + 0) * taps + j];
      const Real w1 = kern[(o + 1) * taps + j];
      const Real w2 = kern[(o + 2) * taps + j];
      const Real w3 = kern[(o + 3) * taps + j];
      const Real* g0 = d_out + (o + 0) * plane;
      const Real* g1 = d_out + (o + 1) * plane;
      const Real* g2 = d_out + (o + 2) * plane;
      const Real* g3 = d_out + (o + 3) * plane;
#pragma omp simd
      for (std::size_t p = 0; p < plane; ++p) dc[p] += w0 * g0[p] + w1 * g1[p] + w2 * g2[p] + w3 * g3[p];
    }
    for (; o < cout; ++o) {
      const Real wk = kern[o * taps + j];
      const Real* g = d_out + o * plane;
#pragma omp simd
      for (std::size_t p = 0; p < plane; ++p) dc[p] += wk * g[p];
    }
  }
  col2im3x3(d_col.data(), cin, h, w, d_in);
}

template <typename Real>
Real sigmoid(Real u) {
  return Real(1) / (Real(1) + std::exp(-u));
}

}  // namespace detail

/// Shared velocity field b(x, tau, level, condition): a stack of 3x3
/// convolutions with FiLM conditioning on the summed time, resolution and
/// class embeddings. The same parameters serve every resolution.
///
/// Parameters live in one flat vector in declaration order:
///   for each conv layer: kernel [out][in][3][3], bias [out]
///   for each hidden layer: FiLM weight [2*out][embed_dim], FiLM bias [2*out]
///   class table [(num_classes + 1)][embed_dim], last row = null token
template <std::floating_point Real>
class VelocityModel {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t kernel = 0;
    std::size_t bias = 0;
    std::size_t film_weight = 0;  // unused on the output layer
    std::size_t film_bias = 0;
  };

  /// Forward activations kept for the reverse pass.
  struct Tape {
    std::vector<Real> embedding;
    std::vector<std::vector<Real>> inputs;  // input to each layer
    std::vector<std::vector<Real>> pre;     // conv output before FiLM (hidden layers)
    std::vector<std::vector<Real>> film;    // [scale..., shift...] per hidden layer
    int height = 0;
    int width = 0;
    int class_row = 0;
  };

  VelocityModel() : VelocityModel(ModelConfig{}) {}

  /// All-zero parameters.
  explicit VelocityModel(ModelConfig config) : config_(config) {
    config_.validate();
    std::size_t offset = 0;
    const int depth = config_.depth;
    layers_.resize(depth);
    for (int l = 0; l < depth; ++l) {
      Layer& layer = layers_[l];
      layer.in = l == 0 ? config_.channels : config_.hidden_channels;
      layer.out = l == depth - 1 ? config_.channels : config_.hidden_channels;
      layer.kernel = offset;
      offset += static_cast<std::size_t>(layer.out) * layer.in * 9;
      layer.bias = offset;
      offset += layer.out;
    }
    for (int l = 0; l + 1 < depth; ++l) {
      Layer& layer = layers_[l];
      layer.film_weight = offset;
      offset += static_cast<std::size_t>(2 * layer.out) * config_.embed_dim;
      layer.film_bias = offset;
      offset += 2 * layer.out;
    }
    class_table_ = offset;
    offset += static_cast<std::size_t>(config_.num_classes + 1) * config_.embed_dim;
    params_.assign(offset, Real(0));
  }

  /// Training initialization: kernels ~ N(0, 2 / fan_in), zero biases, zero
  /// FiLM heads (identity modulation), zero output layer, N(0, 1) class table.
  static VelocityModel initialized(const ModelConfig& config, Rng& rng) {
    VelocityModel m(config);
    for (int l = 0; l + 1 < config.depth; ++l) {
      const Layer& layer = m.layers_[l];
      const double stddev = std::sqrt(2.0 / (9.0 * layer.in));
      const std::size_t n = static_cast<std::size_t>(layer.out) * layer.in * 9;
      for (std::size_t i = 0; i < n; ++i) m.params_[layer.kernel + i] = static_cast<Real>(stddev * rng.normal());
    }
    const std::size_t table = static_cast<std::size_t>(config.num_classes + 1) * config.embed_dim;
    for (std::size_t i = 0; i < table; ++i) m.params_[m.class_table_ + i] = static_cast<Real>(rng.normal());
    return m;
  }

  /// Every parameter ~ N(0, scale^2). Used for gradient checks.
  void randomize(Rng& rng, double scale) {
    for (Real& p : params_) p = static_cast<Real>(scale * rng.normal());
  }

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<Real> parameters() noexcept { return params_; }
  std::span<const Real> parameters() const noexcept { return params_; }
  std::size_t class_table_offset() const noexcept { return class_table_; }

  void set_parameters(std::span<const Real> values) {
    if (values.size() != params_.size()) {
      throw ArgumentError("parameter count mismatch: got " + std::to_string(values.size()) + ", expected " +
                          std::to_string(params_.size()));
    }
    std::copy(values.begin(), values.end(), params_.begin());
  }

  template <std::floating_point To>
  VelocityModel<To> cast() const {
    VelocityModel<To> out(config_);
    std::vector<To> values(params_.begin(), params_.end());
    out.set_parameters(values);
    return out;
  }

  int resolution_at(int level) const {
    if (level < 1) throw ArgumentError("level must be >= 1");
    return config_.base_resolution << (level - 1);
  }

  /// sinusoidal(tau) + sinusoidal(r_level) + class row (null row when absent).
  std::vector<Real> embed(double tau, int level, Condition condition) const {
    const int row = class_row(condition);
    const int dim = config_.embed_dim;
    const std::vector<double> t = sinusoidal_features(tau, dim);
    const std::vector<double> r = sinusoidal_features(static_cast<double>(resolution_at(level)), dim);
    std::vector<Real> e(dim);
    const Real* table = params_.data() + class_table_ + static_cast<std::size_t>(row) * dim;
    for (int j = 0; j < dim; ++j) e[j] = static_cast<Real>(t[j] + r[j]) + table[j];
    return e;
  }

  BasicImage<Real> forward(const BasicImage<Real>& x, double tau, int level, Condition condition) const {
    Tape tape;
    return forward(x, tau, level, condition, tape);
  }

  BasicImage<Real> forward(const BasicImage<Real>& x, double tau, int level, Condition condition, Tape& tape) const {
    if (x.channels() != config_.channels) {
      throw ShapeError("forward: model expects " + std::to_string(config_.channels) + " channels, got " +
                       x.shape_string());
    }
    if (!all_finite(x)) throw ArgumentError("forward: non-finite input");
    if (!std::isfinite(tau)) throw ArgumentError("forward: non-finite tau");

    const int h = x.height();
    const int w = x.width();
    const std::size_t plane = x.plane_size();
    const int depth = config_.depth;
    tape.height = h;
    tape.width = w;
    tape.class_row = class_row(condition);
    tape.embedding = embed(tau, level, condition);
    tape.inputs.resize(depth);
    tape.pre.resize(depth - 1);
    tape.film.resize(depth - 1);
    tape.inputs[0].assign(x.data().begin(), x.data().end());

    std::vector<Real> out;
    std::vector<Real> col;
    for (int l = 0; l < depth; ++l) {
      const Layer& layer = layers_[l];
      std::vector<Real> z(static_cast<std::size_t>(layer.out) * plane);
      detail::conv3x3_forward(tape.inputs[l].data(), layer.in, h, w, params_.data() + layer.kernel,
                              params_.data() + layer.bias, layer.out, z.data(), col);
      if (l == depth - 1) {
        out = std::move(z);
        break;
      }
      std::vector<Real>& film = tape.film[l];
      film_heads(layer, tape.embedding, film);
      std::vector<Real> next(z.size());
      for (int c = 0; c < layer.out; ++c) {
        const Real gain = Real(1) + film[c];
        const Real shift = film[layer.out + c];
        const Real* zc = z.data() + c * plane;
        Real* nc = next.data() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const Real u = zc[p] * gain + shift;
          nc[p] = u * detail::sigmoid(u);
        }
      }
      tape.pre[l] = std::move(z);
      tape.inputs[l + 1] = std::move(next);
    }
    return BasicImage<Real>(x.channels(), h, w, x.level(), std::move(out));
  }

  /// Reverse pass: accumulates d<d_out, forward>/d(params) into `grads`.
  void backward(const Tape& tape, std::span<const Real> d_out, std::span<Real> grads) const {
    if (grads.size() != params_.size()) throw ArgumentError("backward: gradient buffer size mismatch");
    const int h = tape.height;
    const int w = tape.width;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int depth = config_.depth;
    const int dim = config_.embed_dim;

    std::vector<Real> d_embedding(dim, Real(0));
    std::vector<Real> d_z(d_out.begin(), d_out.end());
    std::vector<Real> col;
    std::vector<Real> d_col;
    for (int l = depth - 1; l >= 0; --l) {
      const Layer& layer = layers_[l];
      if (l < depth - 1) {
        // d_z holds dL/d(activation output) of layer l; push it through SiLU and FiLM.
        const std::vector<Real>& z = tape.pre[l];
        const std::vector<Real>& film = tape.film[l];
        std::vector<Real> d_film(2 * layer.out, Real(0));
        for (int c = 0; c < layer.out; ++c) {
          const Real gain = Real(1) + film[c];
          const Real shift = film[layer.out + c];
          const Real* zc = z.data() + c * plane;
          Real* gc = d_z.data() + c * plane;
          Real d_gain = 0;
          Real d_shift = 0;
          for (std::size_t p = 0; p < plane; ++p) {
            const Real u = zc[p] * gain + shift;
            const Real s = detail::sigmoid(u);
            const Real du = gc[p] * (s * (Real(1) + u * (Real(1) - s)));
            d_gain += du * zc[p];
            d_shift += du;
            gc[p] = du * gain;
          }
          d_film[c] = d_gain;
          d_film[layer.out + c] = d_shift;
        }
        Real* gw = grads.data() + layer.film_weight;
        Real* gb = grads.data() + layer.film_bias;
        const Real* fw = params_.data() + layer.film_weight;
        for (int j = 0; j < 2 * layer.out; ++j) {
          gb[j] += d_film[j];
          for (int e = 0; e < dim; ++e) {
            gw[static_cast<std::size_t>(j) * dim + e] += d_film[j] * tape.embedding[e];
            d_embedding[e] += d_film[j] * fw[static_cast<std::size_t>(j) * dim + e];
          }
        }
      }
      std::vector<Real> d_in;
      if (l > 0) d_in.assign(static_cast<std::size_t>(layer.in) * plane, Real(0));
      col.resize(static_cast<std::size_t>(layer.in) * 9 * plane);
      detail::im2col3x3(tape.inputs[l].data(), layer.in, h, w, col.data());
      detail::conv3x3_backward(col, layer.in, h, w, params_.data() + layer.kernel, layer.out, d_z.data(),
                               l > 0 ? d_in.data() : nullptr, grads.data() + layer.kernel,
                               grads.data() + layer.bias, d_col);
      d_z = std::move(d_in);
    }
    Real* g_row = grads.data() + class_table_ + static_cast<std::size_t>(tape.class_row) * dim;
    for (int e = 0; e < dim; ++e) g_row[e] += d_embedding[e];
  }

 private:
  int class_row(Condition condition) const {
    if (!condition) return config_.num_classes;
    if (*condition < 0 || *condition >= config_.num_classes) {
      throw ArgumentError("unknown class label " + std::to_string(*condition));
    }
    return *condition;
  }

  void film_heads(const Layer& layer, const std::vector<Real>& embedding, std::vector<Real>& film) const {
    const int dim = config_.embed_dim;
    film.assign(2 * layer.out, Real(0));
    const Real* fw = params_.data() + layer.film_weight;
    const Real* fb = params_.data() + layer.film_bias;
    for (int j = 0; j < 2 * layer.out; ++j) {
      Real acc = fb[j];
      for (int e = 0; e < dim; ++e) acc += fw[static_cast<std::size_t>(j) * dim + e] * embedding[e];
      film[j] = acc;
    }
  }

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::size_t class_table_ = 0;
  std::vector<Real> params_;
};

template <typename Real>
struct LossAndGrad {
  double loss = 0.0;
  std::vector<Real> grads;
};

/// Flow-matching objective mean_i [ |b(I_i)|^2 - 2 v_i . b(I_i) ] and its
/// exact parameter gradient. Samples may sit at different stages.
template <std::floating_point Real>
LossAndGrad<Real> loss_and_grad(std::span<const CouplingSample> batch, const VelocityModel<Real>& model,
                                LossReduction reduction = LossReduction::Sum) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  for (const CouplingSample& s : batch) {
    if (s.interpolant.channels() != model.config().channels || s.target_velocity.channels() != model.config().channels) {
      throw ArgumentError("loss_and_grad: channel count mismatch in batch");
    }
  }
  LossAndGrad<Real> result;
  result.grads.assign(model.parameter_count(), Real(0));
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  typename VelocityModel<Real>::Tape tape;
  for (const CouplingSample& s : batch) {
    const BasicImage<Real> input = s.interpolant.template cast<Real>();
    const BasicImage<Real> u = model.forward(input, s.tau, s.stage, s.condition, tape);
    const double scale =
        inv_batch * (reduction == LossReduction::PerPixelMean ? 1.0 / static_cast<double>(u.size()) : 1.0);
    double sample_loss = 0.0;
    std::vector<Real> d_out(u.size());
    for (std::size_t p = 0; p < u.size(); ++p) {
      const double up = u[p];
      const double vp = s.target_velocity[p];
      sample_loss += up * up - 2.0 * vp * up;
      d_out[p] = static_cast<Real>(scale * 2.0 * (up - vp));
    }
    result.loss += scale * sample_loss;
    model.backward(tape, d_out, result.grads);
  }
  return result;
}

/// Loss only (no tape); the finite-difference oracle evaluates this.
template <std::floating_point Real>
double flow_matching_loss(std::span<const CouplingSample> batch, const VelocityModel<Real>& model,
                          LossReduction reduction = LossReduction::Sum) {
  if (batch.empty()) throw ArgumentError("flow_matching_loss: empty batch");
  double loss = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const CouplingSample& s : batch) {
    const BasicImage<Real> u = model.forward(s.interpolant.template cast<Real>(), s.tau, s.stage, s.condition);
    const double scale =
        inv_batch * (reduction == LossReduction::PerPixelMean ? 1.0 / static_cast<double>(u.size()) : 1.0);
    double sample_loss = 0.0;
    for (std::size_t p = 0; p < u.size(); ++p) {
      const double up = u[p];
      sample_loss += up * up - 2.0 * static_cast<double>(s.target_velocity[p]) * up;
    }
    loss += scale * sample_loss;
  }
  return loss;
}

}  // namespace cdcfm
