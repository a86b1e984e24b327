// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/pyramid.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

/// Scalar jointly Gaussian endpoints (x0, x1).
struct GaussianPair {
  double mean0 = 0.0;
  double var0 = 0.0;
  double mean1 = 0.0;
  double var1 = 0.0;
  double cov = 0.0;  // Cov(x0, x1)
};

/// E[x1 - x0 | (1 - tau) x0 + tau x1 = x].
///
/// When the interpolant has zero variance (point masses, or a degenerate
/// endpoint at tau = 0 or 1) its covariance with the velocity vanishes too and
/// the conditional mean is the unconditional one, mean1 - mean0.
inline double gaussian_pair_velocity(double x, double tau, const GaussianPair& p) {
  const double a = 1.0 - tau;
  const double mean_v = p.mean1 - p.mean0;
  const double mean_i = a * p.mean0 + tau * p.mean1;
  const double var_i = a * a * p.var0 + tau * tau * p.var1 + 2.0 * a * tau * p.cov;
  const double cov_vi = a * (p.cov - p.var0) + tau * (p.var1 - p.cov);
  if (!(var_i > 1e-300)) return mean_v;
  return mean_v + (cov_vi / var_i) * (x - mean_i);
}

/// Isotropic Gaussian target N(mean, cov_scale * I) at level K, pushed
/// through the cascade's couplings. Stage-k targets are the block-averaged
/// laws N(D(mean), cov_scale / 4^(K-k) I); stage 1 uses the independent
/// prior N(0, sigma^2 I) and later stages x0 = P x1 + sigma_k zeta.
class GaussianStageOracle {
 public:
  GaussianStageOracle(ImageD target_mean, double target_cov_scale, StageSchedule schedule)
      : target_mean_(std::move(target_mean)), cov_scale_(target_cov_scale), schedule_(std::move(schedule)) {
    if (!(cov_scale_ > 0.0)) throw ArgumentError("oracle covariance scale must be positive");
    const int K = schedule_.stages();
    if (target_mean_.level() != K || target_mean_.channels() != schedule_.channels() ||
        target_mean_.height() != schedule_.height_at(K) || target_mean_.width() != schedule_.width_at(K)) {
      throw ShapeError("oracle target mean " + target_mean_.shape_string() + " does not match the schedule");
    }
  }

  const ImageD& target_mean() const noexcept { return target_mean_; }
  double target_cov_scale() const noexcept { return cov_scale_; }
  const StageSchedule& schedule() const noexcept { return schedule_; }

  ImageD stage_mean(int k) const { return composite_downsample(target_mean_, k); }

  double stage_variance(int k) const {
    return cov_scale_ / std::pow(4.0, schedule_.stages() - k);
  }

  /// Analytic E[x1 - x0 | I_tau = x] at stage k.
  ImageD velocity(const ImageD& x, double tau, int k) const {
    const ImageD mean = stage_mean(k);
    require_same_shape(x, mean, "oracle_velocity");
    const double s2 = stage_variance(k);
    const double sigma = schedule_.sigma_at(k);
    ImageD out = ImageD::zeros_like(x);
    if (k == 1) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = gaussian_pair_velocity(x[i], tau, {0.0, sigma * sigma, mean[i], s2, 0.0});
      }
      return out;
    }
    // The block-constant subspace and its complement decouple; each is
    // isotropic, so one scalar law per subspace suffices.
    const ImageD x_coarse = project(x);
    const ImageD m_coarse = project(mean);
    const double n2 = sigma * sigma;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double pm = m_coarse[i];
      const double dm = mean[i] - pm;
      const double v_coarse = gaussian_pair_velocity(x_coarse[i], tau, {pm, s2 + n2, pm, s2, s2});
      const double v_detail = gaussian_pair_velocity(x[i] - x_coarse[i], tau, {0.0, n2, dm, s2, 0.0});
      out[i] = v_coarse + v_detail;
    }
    return out;
  }

 private:
  ImageD target_mean_;
  double cov_scale_;
  StageSchedule schedule_;
};

inline Image oracle_velocity(const Image& x, double tau, int k, const GaussianStageOracle& oracle) {
  return oracle.velocity(x.cast<double>(), tau, k).cast<float>();
}

/// VelocityField view of the oracle; the condition is ignored.
class OracleField {
 public:
  explicit OracleField(const GaussianStageOracle& oracle) : oracle_(&oracle) {}
  Image operator()(const Image& x, double tau, int level, Condition) const {
    return oracle_velocity(x, tau, level, *oracle_);
  }

 private:
  const GaussianStageOracle* oracle_;
};

}  // namespace cdcfm
