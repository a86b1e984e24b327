// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "cdcfm/error.hpp"
#include "cdcfm/pyramid.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

/// Class label; std::nullopt is the null token.
using Condition = std::optional<int>;

/// One flow-matching training tuple at stage `stage`.
struct CouplingSample {
  int stage = 1;
  Image x0;
  Image x1;
  double tau = 0.0;
  Image interpolant;      // (1 - tau) x0 + tau x1
  Image target_velocity;  // x1 - x0
  Condition condition;
};

/// Stage-k ground truth: the full-resolution image averaged down to level k.
inline Image make_stage_target(const Image& x_full, int k, const StageSchedule& schedule) {
  if (x_full.level() != schedule.stages()) {
    throw ArgumentError("make_stage_target: input at level " + std::to_string(x_full.level()) +
                        ", expected " + std::to_string(schedule.stages()));
  }
  if (k < 1 || k > schedule.stages()) throw ArgumentError("make_stage_target: stage out of range");
  return composite_downsample(x_full, k);
}

/// Stage source under the conditional dependent coupling.
/// Stage 1 draws from the independent prior sigma * noise; later stages use
/// upsample(downsample(x1)) + sigma_k * noise.
inline Image make_source(const Image& x1_k, int k, const Image& noise, const StageSchedule& schedule) {
  if (!noise.same_shape(x1_k)) {
    throw ArgumentError("make_source: noise " + noise.shape_string() + " does not match target " +
                        x1_k.shape_string());
  }
  if (x1_k.level() != k) throw ArgumentError("make_source: target is not at level k");
  const auto sigma = static_cast<float>(schedule.sigma_at(k));
  if (k == 1) return sigma * noise;
  Image out = project(x1_k);
  axpy(sigma, noise, out);
  return out;
}

/// Inference-time stage prior: upsample(prev) + sigma_k * noise.
inline Image handoff_prior(const Image& prev_output, int k, const Image& noise, const StageSchedule& schedule) {
  if (k < 2) throw ArgumentError("handoff_prior: stage must be >= 2");
  if (prev_output.level() != k - 1) {
    throw ArgumentError("handoff_prior: previous output at level " + std::to_string(prev_output.level()) +
                        ", expected " + std::to_string(k - 1));
  }
  Image out = upsample(prev_output);
  if (!noise.same_shape(out)) {
    throw ArgumentError("handoff_prior: noise " + noise.shape_string() + " does not match " +
                        out.shape_string());
  }
  axpy(static_cast<float>(schedule.sigma_at(k)), noise, out);
  return out;
}

/// Builds one training sample for global time t with caller-supplied noise
/// shaped like the located stage. `drop` replaces the condition with the null token.
inline CouplingSample draw_training_sample(const Image& x_full, double t, const Image& noise,
                                           const StageSchedule& schedule, Condition condition, bool drop) {
  const StageLocation loc = schedule.locate(t);
  CouplingSample s;
  s.stage = loc.stage;
  s.tau = loc.tau;
  s.x1 = make_stage_target(x_full, loc.stage, schedule);
  s.x0 = make_source(s.x1, loc.stage, noise, schedule);
  s.interpolant = lerp(s.x0, s.x1, loc.tau);
  s.target_velocity = s.x1 - s.x0;
  s.condition = drop ? std::nullopt : condition;
  return s;
}

/// Same as above, drawing the stage noise from `noise_stream`.
inline CouplingSample draw_training_sample(const Image& x_full, double t, Rng& noise_stream,
                                           const StageSchedule& schedule, Condition condition, bool drop) {
  const int k = schedule.locate(t).stage;
  Image noise = noise_stream.normal_image(schedule.channels(), schedule.height_at(k), schedule.width_at(k), k);
  return draw_training_sample(x_full, t, noise, schedule, condition, drop);
}

}  // namespace cdcfm
