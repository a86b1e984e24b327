// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cdcfm/schedule.hpp"

namespace cdcfm {
namespace {

TEST(Schedule, LocateUniformThreeStages) {
  const StageSchedule s = StageSchedule::uniform(3, 8, 1, 1.0, 2.0, 4);
  EXPECT_EQ(s.locate(0.0).stage, 1);
  EXPECT_DOUBLE_EQ(s.locate(0.0).tau, 0.0);
  EXPECT_EQ(s.locate(0.5).stage, 2);
  EXPECT_NEAR(s.locate(0.5).tau, 0.5, 1e-12);
  EXPECT_EQ(s.locate(1.0).stage, 3);
  EXPECT_DOUBLE_EQ(s.locate(1.0).tau, 1.0);
}

TEST(Schedule, InteriorBoundaryBelongsToLaterStage) {
  const StageSchedule s(2, 4, 4, 1, {0.0, 0.25, 1.0}, 1.0, 2.0, {2, 2});
  const StageLocation loc = s.locate(0.25);
  EXPECT_EQ(loc.stage, 2);
  EXPECT_DOUBLE_EQ(loc.tau, 0.0);
  EXPECT_EQ(s.locate(std::nextafter(0.25, 0.0)).stage, 1);
}

TEST(Schedule, GlobalTimeInvertsLocate) {
  const StageSchedule s(3, 2, 2, 1, {0.0, 0.1, 0.6, 1.0}, 1.0, 2.0, {1, 1, 1});
  for (double t : {0.0, 0.05, 0.1, 0.3, 0.6, 0.61, 0.99, 1.0}) {
    const StageLocation loc = s.locate(t);
    EXPECT_NEAR(s.global_time(loc.stage, loc.tau), t, 1e-12) << t;
  }
}

TEST(Schedule, OutOfRangeTimeThrows) {
  const StageSchedule s = StageSchedule::uniform(2, 4, 1, 1.0, 2.0, 1);
  EXPECT_THROW(s.locate(1.5), ArgumentError);
  EXPECT_THROW(s.locate(-0.1), ArgumentError);
  EXPECT_THROW(s.locate(std::nan("")), ArgumentError);
}

TEST(Schedule, NoiseDecaysGeometrically) {
  const StageSchedule s = StageSchedule::uniform(4, 2, 1, 0.5, 2.0, 1);
  EXPECT_DOUBLE_EQ(s.sigma_at(1), 0.5);
  EXPECT_DOUBLE_EQ(s.sigma_at(2), 0.25);
  EXPECT_DOUBLE_EQ(s.sigma_at(3), 0.125);
  EXPECT_DOUBLE_EQ(s.sigma_at(4), 0.0625);
  const StageSchedule flat = s.with_gamma(1.0);
  for (int k = 1; k <= 4; ++k) EXPECT_DOUBLE_EQ(flat.sigma_at(k), 0.5);
}

TEST(Schedule, Geometry) {
  const StageSchedule s = StageSchedule::uniform(3, 8, 6, 3, 1.0, 2.0, {1, 2, 3});
  EXPECT_EQ(s.height_at(1), 8);
  EXPECT_EQ(s.width_at(3), 24);
  EXPECT_EQ(s.dim_at(2), 3u * 16 * 12);
  EXPECT_EQ(s.steps_at(3), 3);
  EXPECT_TRUE(s.matches(s.zeros_at(2), 2));
  EXPECT_FALSE(s.matches(s.zeros_at(2), 3));
  EXPECT_THROW(s.height_at(4), ArgumentError);
}

TEST(Schedule, ValidationErrors) {
  EXPECT_THROW(StageSchedule::uniform(0, 8, 1, 1.0, 2.0, 1), ArgumentError);
  EXPECT_THROW(StageSchedule::uniform(2, 8, 1, 0.0, 2.0, 1), ArgumentError);
  EXPECT_THROW(StageSchedule::uniform(2, 8, 1, 1.0, 0.5, 1), ArgumentError);
  EXPECT_THROW(StageSchedule::uniform(2, 8, 1, 1.0, 2.0, 0), ArgumentError);
  EXPECT_THROW(StageSchedule(2, 4, 4, 1, {0.0, 0.7, 0.5}, 1.0, 2.0, {1, 1}), ArgumentError);
  EXPECT_THROW(StageSchedule(2, 4, 4, 1, {0.0, 1.0}, 1.0, 2.0, {1, 1}), ArgumentError);
  EXPECT_THROW(StageSchedule(2, 4, 4, 1, {0.0, 0.5, 1.0}, 1.0, 2.0, {1}), ArgumentError);
}

}  // namespace
}  // namespace cdcfm
