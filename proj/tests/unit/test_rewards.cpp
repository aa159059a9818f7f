#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rewards.hpp"
#include "rgcd/rng.hpp"

using namespace rgcd;

namespace {

// F = 3 frames of width 2, identity codec, one class with hand-picked targets.
RewardSuite hand_suite() {
  RewardSuite s;
  s.latent = {3, 2};
  s.codec = Codec::identity(2);
  s.frame.targets = {Array::vector({1.0, 0.0})};
  s.frame.directions = {Array::vector({0.0, 1.0})};
  s.sequence.trajectories = {Array::from_rows({{0.0, 0.0}, {1.0, 0.0}, {2.0, 1.0}})};
  s.sequence.velocity_weight = 0.5;
  s.weights = {1.0, 2.0, 2};
  s.validate();
  return s;
}

const Array kSample = Array::from_rows({{1.0, 1.0, 0.0, 2.0, 3.0, 0.0}});  // frames (1,1) (0,2) (3,0)
const std::size_t kClass[] = {0};

}  // namespace

TEST(Codec, LinearEncodeInvertsDecode) {
  const Codec c = Codec::linear(4, 6, 3);
  StreamRng rng(1, Stream::gradcheck, 0);
  const Array z = rng.normal_array({8, 4});
  const Array back = c.encode(c.decode(z));
  EXPECT_LT(ad::max_abs_diff(back.reshaped(z.shape()), z), 1e-12);
}

TEST(Codec, TapeDecodeMatchesPlainDecode) {
  const Codec c = Codec::linear(4, 6, 5);
  StreamRng rng(2, Stream::gradcheck, 0);
  const Array z = rng.normal_array({2, 32});
  ad::Tape t;
  const Array a = c.decode(t, t.constant(z)).value();
  EXPECT_LT(ad::max_abs_diff(a, c.decode(z)), 1e-14);
}

TEST(FrameReward, HandComputedNegSqDistance) {
  const auto s = hand_suite();
  // |x_f - g|^2 with g = (1, 0): 1, 5, 4; M/F = 2/3
  const auto m = frame_metric(s, kSample, kClass);
  EXPECT_NEAR(m[0], -(2.0 / 3.0) * 10.0, 1e-14);
  ad::Tape t;
  const std::size_t frames[] = {0, 2};
  EXPECT_NEAR(j_img(t, s, t.constant(kSample), kClass, frames, 2).value().item(), -5.0, 1e-14);
}

TEST(FrameReward, MetricIsExpectationOverFrameDraws) {
  const auto s = hand_suite();
  double acc = 0.0;
  const int n = 3000;
  StreamRng rng(3, Stream::frames, 0);
  for (int i = 0; i < n; ++i) {
    ad::Tape t;
    const auto frames = sample_frames(rng, 1, 3, 2);
    acc += j_img(t, s, t.constant(kSample), kClass, frames, 2).value().item();
  }
  // Each pair of distinct frames has total in {6, 5, 9}; spread 4/3.
  EXPECT_NEAR(acc / n, frame_metric(s, kSample, kClass)[0], 0.1);
}

TEST(FrameReward, CosineIsBounded) {
  auto s = hand_suite();
  s.frame.kind = FrameRewardKind::cosine;
  ad::Tape t;
  const std::size_t frames[] = {0, 1};
  const double v = j_img(t, s, t.constant(kSample), kClass, frames, 2).value().item();
  // x.u / |x| for (1,1) and (0,2): 1/sqrt(2) + 1
  EXPECT_NEAR(v, 1.0 / std::sqrt(2.0) + 1.0, 1e-6);
}

TEST(SequenceReward, HandComputed) {
  const auto s = hand_suite();
  // position: (1,1)-(0,0)=2, (0,2)-(1,0)=5, (3,0)-(2,1)=2 -> mean 3
  // velocity: dx = (-1,1),(3,-2); dtau = (1,0),(1,1) -> 5 + 13 = 18, /(F-1) = 9
  const auto m = sequence_metric(s, kSample, kClass);
  EXPECT_NEAR(m[0], -3.0 - 0.5 * 9.0, 1e-14);
  EXPECT_NEAR(combined_metric(s, kSample, kClass)[0], -(20.0 / 3.0) + 2.0 * (-7.5), 1e-13);
}

TEST(SequenceReward, MaximizedOnTheTrajectory) {
  const auto s = hand_suite();
  const Array on = s.sequence.trajectories[0].reshaped({1, 6});
  EXPECT_EQ(sequence_metric(s, on, kClass)[0], 0.0);
}

TEST(SampleFrames, WithoutReplacementAndInRange) {
  StreamRng rng(4, Stream::frames, 0);
  const auto f = sample_frames(rng, 50, 8, 6);
  ASSERT_EQ(f.size(), 300u);
  for (std::size_t b = 0; b < 50; ++b) {
    std::set<std::size_t> seen(f.begin() + b * 6, f.begin() + (b + 1) * 6);
    EXPECT_EQ(seen.size(), 6u);
    EXPECT_LT(*seen.rbegin(), 8u);
  }
  EXPECT_THROW(sample_frames(rng, 1, 4, 5), DomainError);
}

TEST(RewardSuite, ValidateCatchesMismatches) {
  auto s = hand_suite();
  s.weights.frames_sampled = 4;
  EXPECT_THROW(s.validate(), DomainError);
  s = hand_suite();
  s.frame.targets[0] = Array::vector({1.0, 2.0, 3.0});
  EXPECT_THROW(s.validate(), ShapeError);
}
