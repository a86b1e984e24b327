// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cdcfm/coupling.hpp"
#include "cdcfm/rng.hpp"

namespace cdcfm {
namespace {

StageSchedule three_stage() { return StageSchedule::uniform(3, 4, 1, 1.0, 2.0, 4); }

TEST(Coupling, StageTargetsAreBlockAverages) {
  const StageSchedule s = three_stage();
  Rng rng(1);
  const Image x = rng.normal_image<float>(1, 16, 16, 3);
  EXPECT_TRUE(bit_equal(make_stage_target(x, 3, s), x));
  EXPECT_TRUE(bit_equal(make_stage_target(x, 2, s), downsample(x)));
  EXPECT_TRUE(bit_equal(make_stage_target(x, 1, s), downsample(downsample(x))));
  EXPECT_THROW(make_stage_target(downsample(x), 2, s), ArgumentError);
}

TEST(Coupling, FirstStageSourceIsScaledNoise) {
  StageSchedule s = StageSchedule::uniform(2, 4, 1, 0.5, 2.0, 1);
  Rng rng(2);
  const Image x1 = rng.normal_image<float>(1, 4, 4, 1);
  const Image noise = rng.normal_like(x1);
  EXPECT_TRUE(bit_equal(make_source(x1, 1, noise, s), 0.5f * noise));
}

TEST(Coupling, LaterStageSourceIsProjectedTargetPlusNoise) {
  const StageSchedule s = three_stage();
  Rng rng(3);
  const Image x1 = rng.normal_image<float>(1, 8, 8, 2);
  const Image zero = Image::zeros_like(x1);
  EXPECT_TRUE(bit_equal(make_source(x1, 2, zero, s), project(x1)));
  const Image noise = rng.normal_like(x1);
  const Image x0 = make_source(x1, 2, noise, s);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_FLOAT_EQ(x0[i], project(x1)[i] + 0.5f * noise[i]);
  }
}

TEST(Coupling, SourceMeanIsProjectedTarget) {
  const StageSchedule s = three_stage();
  Rng rng(4);
  const Image x1 = rng.normal_image<float>(1, 8, 8, 2);
  ImageD mean = ImageD::zeros_like(x1);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Image x0 = make_source(x1, 2, rng.normal_like(x1), s);
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += x0[p] / n;
  }
  const Image px = project(x1);
  // sigma_2 = 0.5, standard error 0.5 / sqrt(n)
  for (std::size_t p = 0; p < mean.size(); ++p) EXPECT_NEAR(mean[p], px[p], 5 * 0.5 / std::sqrt(n));
}

TEST(Coupling, ShapeMismatchThrows) {
  const StageSchedule s = three_stage();
  const Image x1(1, 8, 8, 2);
  EXPECT_THROW(make_source(x1, 2, Image(1, 4, 4, 1), s), ArgumentError);
  EXPECT_THROW(make_source(x1, 3, Image(1, 8, 8, 2), s), ArgumentError);
}

TEST(Coupling, TrainingSampleEndpoints) {
  const StageSchedule s = three_stage();
  Rng rng(5);
  const Image x = rng.normal_image<float>(1, 16, 16, 3);
  const Image noise16 = rng.normal_image<float>(1, 16, 16, 3);
  const CouplingSample at_end = draw_training_sample(x, 1.0, noise16, s, 2, false);
  EXPECT_EQ(at_end.stage, 3);
  EXPECT_TRUE(bit_equal(at_end.interpolant, at_end.x1));
  EXPECT_EQ(at_end.condition, Condition(2));

  const Image noise4 = rng.normal_image<float>(1, 4, 4, 1);
  const CouplingSample at_start = draw_training_sample(x, 0.0, noise4, s, 2, true);
  EXPECT_EQ(at_start.stage, 1);
  EXPECT_TRUE(bit_equal(at_start.interpolant, at_start.x0));
  EXPECT_FALSE(at_start.condition.has_value());
  EXPECT_TRUE(bit_equal(at_start.target_velocity, at_start.x1 - at_start.x0));
}

TEST(Coupling, InterpolantIsLinear) {
  const StageSchedule s = three_stage();
  Rng rng(6);
  const Image x = rng.normal_image<float>(1, 16, 16, 3);
  const double t = 0.5;  // stage 2, tau = 0.5
  const Image noise = rng.normal_image<float>(1, 8, 8, 2);
  const CouplingSample c = draw_training_sample(x, t, noise, s, std::nullopt, false);
  ASSERT_EQ(c.stage, 2);
  for (std::size_t i = 0; i < c.interpolant.size(); ++i) {
    EXPECT_NEAR(c.interpolant[i], 0.5 * c.x0[i] + 0.5 * c.x1[i], 1e-6);
  }
}

TEST(Coupling, HandoffPrior) {
  const StageSchedule s = three_stage();
  Rng rng(7);
  const Image prev = rng.normal_image<float>(1, 4, 4, 1);
  const Image noise = rng.normal_image<float>(1, 8, 8, 2);
  const Image prior = handoff_prior(prev, 2, noise, s);
  const Image up = upsample(prev);
  for (std::size_t i = 0; i < prior.size(); ++i) EXPECT_FLOAT_EQ(prior[i], up[i] + 0.5f * noise[i]);
  EXPECT_THROW(handoff_prior(prev, 1, noise, s), ArgumentError);
  EXPECT_THROW(handoff_prior(prev, 3, noise, s), ArgumentError);
}

}  // namespace
}  // namespace cdcfm
