// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "cdcfm/oracle.hpp"
#include "oracles.hpp"

namespace cdcfm {
namespace {

TEST(GaussianPair, PointMassTarget) {
  // x0 ~ N(0, 1), x1 = m: E[m - x0 | I = x] = m - (x - tau m) / (1 - tau).
  const GaussianPair p{0.0, 1.0, 2.0, 0.0, 0.0};
  for (double tau : {0.0, 0.25, 0.5, 0.9}) {
    for (double x : {-1.0, 0.0, 0.7}) {
      EXPECT_NEAR(gaussian_pair_velocity(x, tau, p), 2.0 - (x - tau * 2.0) / (1.0 - tau), 1e-12);
    }
  }
}

TEST(GaussianPair, DegenerateInterpolantFallsBackToMeanVelocity) {
  const GaussianPair both_fixed{1.0, 0.0, 3.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(gaussian_pair_velocity(5.0, 0.4, both_fixed), 2.0);
}

TEST(GaussianPair, IndependentStandardEndpoints) {
  // Var(I) = (1 - tau)^2 + tau^2, Cov(V, I) = tau - (1 - tau).
  const GaussianPair p{0.0, 1.0, 0.0, 1.0, 0.0};
  const double tau = 0.3;
  const double expected = (2 * tau - 1) / ((1 - tau) * (1 - tau) + tau * tau) * 0.8;
  EXPECT_NEAR(gaussian_pair_velocity(0.8, tau, p), expected, 1e-12);
}

TEST(StageOracle, Validation) {
  const StageSchedule s = StageSchedule::uniform(2, 2, 1, 1.0, 2.0, 1);
  EXPECT_THROW(GaussianStageOracle(ImageD(1, 2, 2, 1), 1.0, s), ShapeError);
  EXPECT_THROW(GaussianStageOracle(ImageD(1, 4, 4, 2), 0.0, s), ArgumentError);
  const GaussianStageOracle o(ImageD(1, 4, 4, 2, 1.0), 0.8, s);
  EXPECT_DOUBLE_EQ(o.stage_variance(2), 0.8);
  EXPECT_DOUBLE_EQ(o.stage_variance(1), 0.2);
  EXPECT_DOUBLE_EQ(o.stage_mean(1)[0], 1.0);
}

TEST(StageOracle, MatchesDenseConditioningAtProbePoints) {
  const int K = 3;
  const StageSchedule s = StageSchedule::uniform(K, 1, 2, 2, 0.7, 2.0, std::vector<int>(K, 1));
  Rng rng(21);
  const ImageD mean = rng.normal_image<double>(2, s.height_at(K), s.width_at(K), K);
  const GaussianStageOracle o(mean, 0.6, s);
  double worst = 0.0;
  for (int k = 1; k <= K; ++k) {
    const oracle::DenseGaussianPair dense =
        oracle::stage_pair(o.stage_mean(k), o.stage_variance(k), s.sigma_at(k), k == 1);
    for (int probe = 0; probe < 20; ++probe) {
      const double tau = rng.uniform();
      const ImageD x = rng.normal_image<double>(2, s.height_at(k), s.width_at(k), k);
      const ImageD ours = o.velocity(x, tau, k);
      Eigen::VectorXd xv(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) xv[i] = x[i];
      const Eigen::VectorXd ref = dense.velocity(xv, tau);
      double diff = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) diff += (ours[i] - ref[i]) * (ours[i] - ref[i]);
      worst = std::max(worst, std::sqrt(diff) / ref.norm());
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(StageOracle, FieldAdapterIgnoresCondition) {
  const StageSchedule s = StageSchedule::uniform(2, 2, 1, 1.0, 2.0, 1);
  const GaussianStageOracle o(ImageD(1, 4, 4, 2, 0.5), 0.3, s);
  const OracleField f(o);
  Rng rng(2);
  const Image x = rng.normal_image<float>(1, 4, 4, 2);
  EXPECT_TRUE(bit_equal(f(x, 0.5, 2, 1), f(x, 0.5, 2, std::nullopt)));
}

}  // namespace
}  // namespace cdcfm
