// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/model.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

/// Anything that evaluates a velocity b(x, tau, level, condition).
template <typename F>
concept VelocityField = requires(const F& f, const Image& x, double tau, int level, Condition c) {
  { f(x, tau, level, c) } -> std::convertible_to<Image>;
};

/// Adapts a model to the VelocityField interface.
class ModelField {
 public:
  explicit ModelField(const VelocityModel<float>& model) : model_(&model) {}
  Image operator()(const Image& x, double tau, int level, Condition c) const {
    return model_->forward(x, tau, level, c);
  }

 private:
  const VelocityModel<float>* model_;
};

struct SampleConfig {
  StageSchedule schedule;
  // One strength shared by every stage.
  double guidance_scale = 3.0;
  Condition condition;
  std::uint64_t seed = 0;
  bool record_intermediates = false;
};

/// (1 - S) * unconditional + S * conditional, or the plain field when no
/// condition is given.
template <VelocityField Field>
Image guided_velocity(const Field& field, const Image& x, double tau, int level, const Condition& condition,
                      double guidance_scale) {
  if (!condition) return field(x, tau, level, std::nullopt);
  const Image uncond = field(x, tau, level, std::nullopt);
  const Image cond = field(x, tau, level, condition);
  const auto a = static_cast<float>(1.0 - guidance_scale);
  const auto b = static_cast<float>(guidance_scale);
  Image out = Image::zeros_like(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * uncond[i] + b * cond[i];
  return out;
}

/// Integrates one stage with N_k uniform forward-Euler steps on tau in [0, 1].
template <VelocityField Field>
Image euler_stage(const Image& x0, int k, const Field& field, const SampleConfig& cfg) {
  if (x0.level() != k) throw ArgumentError("euler_stage: start state not at level k");
  const int n = cfg.schedule.steps_at(k);
  const double dtau = 1.0 / n;
  const auto step = static_cast<float>(dtau);
  Image x = x0;
  for (int i = 0; i < n; ++i) {
    const double tau = i * dtau;
    const Image v = guided_velocity(field, x, tau, k, cfg.condition, cfg.guidance_scale);
    axpy(step, v, x);
    if (!all_finite(x)) {
      throw NumericError("non-finite sampler state at stage " + std::to_string(k) + ", step " + std::to_string(i));
    }
  }
  return x;
}

/// Stage-1 draw: prior sigma * N(0, I) integrated to tau = 1.
template <VelocityField Field>
Image sample_first_stage(const Field& field, const SampleConfig& cfg, Rng& rng) {
  const StageSchedule& s = cfg.schedule;
  Image x0 = static_cast<float>(s.sigma()) * rng.normal_image(s.channels(), s.height_at(1), s.width_at(1), 1);
  return euler_stage(x0, 1, field, cfg);
}

/// Stage-k refinement from the previous stage output (Markov handoff).
template <VelocityField Field>
Image refine_stage(const Image& prev_output, int k, const Field& field, const SampleConfig& cfg, Rng& rng) {
  const StageSchedule& s = cfg.schedule;
  const Image noise = rng.normal_image(s.channels(), s.height_at(k), s.width_at(k), k);
  return euler_stage(handoff_prior(prev_output, k, noise, s), k, field, cfg);
}

struct SampleResult {
  Image output;                     // level K
  std::vector<Image> intermediates;  // stage outputs 1..K when recorded
};

/// Coarse-to-fine cascade: stage 1 from noise, then K-1 handoff refinements.
template <VelocityField Field>
SampleResult sample(const Field& field, const SampleConfig& cfg, Rng& rng) {
  SampleResult result;
  Image x = sample_first_stage(field, cfg, rng);
  if (cfg.record_intermediates) result.intermediates.push_back(x);
  for (int k = 2; k <= cfg.schedule.stages(); ++k) {
    x = refine_stage(x, k, field, cfg, rng);
    if (cfg.record_intermediates) result.intermediates.push_back(x);
  }
  result.output = std::move(x);
  return result;
}

inline SampleResult sample(const VelocityModel<float>& model, const SampleConfig& cfg, Rng& rng) {
  return sample(ModelField(model), cfg, rng);
}

/// `count` cascades; sample i uses the stream keyed by (cfg.seed, i).
template <VelocityField Field>
std::vector<SampleResult> sample_many(const Field& field, const SampleConfig& cfg, int count) {
  std::vector<SampleResult> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng({cfg.seed, static_cast<std::uint64_t>(i)});
    out.push_back(sample(field, cfg, rng));
  }
  return out;
}

}  // namespace cdcfm
