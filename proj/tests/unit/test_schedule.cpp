#include <gtest/gtest.h>

#include <cmath>

#include "rgcd/error.hpp"
#include "rgcd/schedule.hpp"

using namespace rgcd;

TEST(Schedule, VariancePreservingAtEveryTime) {
  const NoiseSchedule s;
  for (double t : {0.0, 1e-6, 0.01, 0.3, 0.77, 1.0}) {
    const auto [a, b] = s.alpha_beta(t);
    EXPECT_NEAR(a * a + b * b, 1.0, 1e-14) << t;
  }
  EXPECT_DOUBLE_EQ(s.alpha_beta(0.0).alpha, 1.0);
  EXPECT_DOUBLE_EQ(s.alpha_beta(0.0).beta, 0.0);
}

TEST(Schedule, AlphaDecreasesMonotonically) {
  const NoiseSchedule s;
  double prev = 2.0;
  for (int i = 0; i <= 1000; ++i) {
    const double a = s.alpha_beta(i / 1000.0).alpha;
    EXPECT_LT(a, prev);
    prev = a;
  }
}

TEST(Schedule, ClosedFormAlpha) {
  const NoiseSchedule s;
  // int_0^1 (0.1 + 19.9 s) ds = 0.1 + 9.95
  EXPECT_NEAR(s.alpha_beta(1.0).alpha, std::exp(-0.5 * 10.05), 1e-15);
}

TEST(Schedule, DriftMatchesFiniteDifference) {
  const NoiseSchedule s;
  for (double t : {0.05, 0.4, 0.9}) {
    const double h = 1e-6;
    const double fd = (std::log(s.alpha_beta(t + h).alpha) - std::log(s.alpha_beta(t - h).alpha)) / (2 * h);
    const auto dd = s.drift_diffusion(t);
    EXPECT_NEAR(dd.drift, fd, 1e-7);
    // sigma^2 = b(t) for the VP family.
    EXPECT_NEAR(dd.diffusion_sq, s.rate(t), 1e-10);
  }
}

TEST(Schedule, RejectsTimesOutsideHorizon) {
  const NoiseSchedule s;
  EXPECT_THROW(s.alpha_beta(-0.1), DomainError);
  EXPECT_THROW(s.alpha_beta(1.5), DomainError);
}

TEST(Schedule, RejectsBadParams) {
  ScheduleParams p;
  p.rate_max = 0.05;
  p.epsilon = 2.0;
  try {
    NoiseSchedule s(p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

TEST(Grid, UniformWithExactEndpoints) {
  const NoiseSchedule s;
  const TimeGrid g = s.discretize(5);
  EXPECT_EQ(g.size(), 100u);
  EXPECT_EQ(g.at(1), 0.01);
  EXPECT_EQ(g.at(100), 1.0);
  EXPECT_THROW(g.at(0), DomainError);
  EXPECT_THROW(g.at(101), DomainError);
}

TEST(Grid, NeedsRoomForSkip) {
  ScheduleParams p;
  p.grid_size = 5;
  const NoiseSchedule s(p);
  EXPECT_THROW(s.discretize(20), DomainError);
  EXPECT_NO_THROW(s.discretize(3));
  EXPECT_THROW(s.discretize(4), DomainError);
}

TEST(Perturb, MixesDataAndNoise) {
  const NoiseSchedule s;
  const Array z0 = Array::vector({1.0, -2.0});
  const Array n = Array::vector({0.5, 0.5});
  const auto [a, b] = s.alpha_beta(0.5);
  const Array z = perturb(s, z0, 0.5, n);
  EXPECT_DOUBLE_EQ(z[0], a * 1.0 + b * 0.5);
  EXPECT_THROW(perturb(s, z0, 0.5, Array::vector({1.0})), ShapeError);
}
