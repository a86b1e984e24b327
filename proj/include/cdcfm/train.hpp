// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/model.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/schedule.hpp"

namespace cdcfm {

struct TrainConfig {
  int batch_size = 32;
  int steps = 0;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-6;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  double ema_decay = 0.9999;
  // Ramp the EMA decay as min(decay, (1 + n) / (10 + n)) so short runs do not
  // stay pinned to the initialization.
  bool ema_warmup = true;
  double p_drop = 0.1;
  std::uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::PerPixelMean;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train_steps must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("lr must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in (0, 1)");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must lie in [0, 1)");
  }
};

struct LabeledImage {
  Image image;  // at level K
  Condition label;
};

/// Decoupled-weight-decay Adam with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double lr, double beta1, double beta2, double eps, double weight_decay = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<float> params, std::span<const float> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ArgumentError("AdamOptimizer: size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
      double p = params[i];
      if (weight_decay_ > 0.0) p -= lr_ * weight_decay_ * p;
      params[i] = static_cast<float>(p - lr_ * update);
    }
  }

  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Rescales `grads` so its L2 norm is at most `max_norm`. Returns the norm before clipping.
inline double clip_global_norm(std::span<float> grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (float& g : grads) g = static_cast<float>(g * scale);
  }
  return norm;
}

inline double ema_decay_at(long step, double decay, bool warmup) {
  if (!warmup) return decay;
  return std::min(decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
}

/// ema <- decay * ema + (1 - decay) * params
inline void ema_update(std::span<float> ema, std::span<const float> params, double decay) {
  for (std::size_t i = 0; i < ema.size(); ++i) {
    ema[i] = static_cast<float>(decay * ema[i] + (1.0 - decay) * params[i]);
  }
}

struct TrainResult {
  VelocityModel<float> model;  // raw parameters
  VelocityModel<float> ema;    // averaged copy used for sampling
  std::vector<double> loss_trace;
  std::vector<double> grad_norm_trace;  // before clipping
};

struct TrainHooks {
  int checkpoint_every = 0;
  std::function<void(int step, const TrainResult&)> on_checkpoint;
  std::function<void(int step, double loss)> on_step;
};

/// Checks the dataset against the schedule and the model geometry.
inline void check_training_inputs(std::span<const LabeledImage> dataset, const StageSchedule& schedule,
                                  const ModelConfig& model_config) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (model_config.channels != schedule.channels()) {
    throw ConfigError("model channels do not match the schedule");
  }
  if (model_config.base_resolution != schedule.base_height()) {
    throw ConfigError("model base resolution does not match the schedule");
  }
  const int k = schedule.stages();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!schedule.matches(dataset[i].image, k)) {
      throw ConfigError("dataset image " + std::to_string(i) + " is " + dataset[i].image.shape_string() +
                        ", expected " + schedule.zeros_at(k).shape_string());
    }
    if (dataset[i].label && (*dataset[i].label < 0 || *dataset[i].label >= model_config.num_classes)) {
      throw ConfigError("dataset image " + std::to_string(i) + " has label outside [0, num_classes)");
    }
  }
}

/// Draws one training batch: per element an image index, a global time
/// t ~ U[0, 1], a dropout coin and the stage noise, in that order.
inline std::vector<CouplingSample> draw_batch(std::span<const LabeledImage> dataset, const StageSchedule& schedule,
                                              int batch_size, double p_drop, Rng& rng) {
  std::vector<CouplingSample> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const LabeledImage& item = dataset[rng.index(dataset.size())];
    const double t = rng.uniform();
    const bool drop = rng.uniform() < p_drop;
    batch.push_back(draw_training_sample(item.image, t, rng, schedule, item.label, drop));
  }
  return batch;
}

/// Flow-matching training of one shared model over all stages.
inline TrainResult train(std::span<const LabeledImage> dataset, const StageSchedule& schedule,
                         const ModelConfig& model_config, const TrainConfig& config, const TrainHooks& hooks = {}) {
  config.validate();
  check_training_inputs(dataset, schedule, model_config);

  Rng init_rng({config.seed, 0});
  Rng data_rng({config.seed, 1});
  TrainResult result{VelocityModel<float>::initialized(model_config, init_rng), VelocityModel<float>(model_config), {}, {}};
  result.ema = result.model;
  result.loss_trace.reserve(config.steps);

  AdamOptimizer adam(result.model.parameter_count(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                     config.adam_eps, config.weight_decay);
  for (int step = 1; step <= config.steps; ++step) {
    const std::vector<CouplingSample> batch =
        draw_batch(dataset, schedule, config.batch_size, config.p_drop, data_rng);
    LossAndGrad<float> lg = loss_and_grad<float>(batch, result.model, config.loss_reduction);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("non-finite training loss at step " + std::to_string(step));
    }
    const double norm = clip_global_norm(lg.grads, config.grad_clip);
    adam.step(result.model.parameters(), lg.grads);
    ema_update(result.ema.parameters(), result.model.parameters(),
               ema_decay_at(step - 1, config.ema_decay, config.ema_warmup));
    result.loss_trace.push_back(lg.loss);
    result.grad_norm_trace.push_back(norm);
    if (hooks.on_step) hooks.on_step(step, lg.loss);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && step % hooks.checkpoint_every == 0) {
      hooks.on_checkpoint(step, result);
    }
  }
  return result;
}

}  // namespace cdcfm
