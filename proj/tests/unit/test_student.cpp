#include <gtest/gtest.h>

#include <cmath>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"
#include "rgcd/student.hpp"

using namespace rgcd;

namespace {

StudentConfig small_config() {
  StudentConfig c;
  c.hidden = 16;
  c.lora_rank = 3;
  c.head_scale = 1.0;
  return c;
}

// Student with generic (non-zero) LoRA factors.
ConsistencyStudent random_student(std::uint64_t seed) {
  auto s = ConsistencyStudent::init(small_config(), NoiseSchedule{}, seed);
  StreamRng rng(seed, Stream::gradcheck, 1);
  for (auto* t : s.online().tensors()) *t = rng.normal_array(t->shape(), 0.3);
  return s;
}

struct Inputs {
  Array z;
  Array emb;
  std::vector<double> omega;
};

Inputs random_inputs(std::uint64_t seed, std::size_t rows) {
  StreamRng rng(seed, Stream::gradcheck, 2);
  Inputs in{rng.normal_array({rows, 32}), rng.normal_array({rows, 4}), {}};
  for (std::size_t r = 0; r < rows; ++r) in.omega.push_back(rng.uniform(5.0, 15.0));
  return in;
}

}  // namespace

TEST(Boundary, CoefficientsAtEpsilon) {
  const BoundaryFns fns{0.5, 0.01};
  const auto b = boundary(fns, 0.01);
  EXPECT_EQ(b.skip, 1.0);
  EXPECT_EQ(b.out, 0.0);
  // r^2 = (t - eps)^2 + sd^2
  const double t = 0.7, r2 = 0.69 * 0.69 + 0.25;
  EXPECT_NEAR(boundary(fns, t).skip, 0.25 / r2, 1e-15);
  EXPECT_NEAR(boundary(fns, t).out, 0.69 / std::sqrt(r2), 1e-15);
}

TEST(Boundary, DerivativeMatchesFiniteDifference) {
  const BoundaryFns fns{0.5, 0.01};
  for (double t : {0.02, 0.3, 0.9}) {
    const double h = 1e-6;
    const auto d = boundary_derivative(fns, t);
    EXPECT_NEAR(d.skip, (boundary(fns, t + h).skip - boundary(fns, t - h).skip) / (2 * h), 1e-7);
    EXPECT_NEAR(d.out, (boundary(fns, t + h).out - boundary(fns, t - h).out) / (2 * h), 1e-7);
  }
}

TEST(Student, IdentityAtEpsilonForRandomWeights) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_student(seed);
    const auto in = random_inputs(seed, 3);
    const std::vector<double> t(3, s.schedule().epsilon());
    const Array f = s.f_theta(in.z, in.emb, in.omega, t);
    EXPECT_EQ(f, in.z) << seed;
  }
}

TEST(Student, LoraMergeMatchesAdapterPath) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_student(seed);
    const auto in = random_inputs(seed, 4);
    const std::vector<double> t = {0.05, 0.3, 0.6, 1.0};
    const Array a = s.f_theta(in.z, in.emb, in.omega, t);
    const Array b = s.f_theta_merged(nn::lora_merge(s.base(), s.online()), in.z, in.emb, in.omega, t);
    EXPECT_LT(ad::max_abs_diff(a, b), 1e-12) << seed;
  }
}

TEST(Student, ZeroUpFactorsLeaveBaseFunction) {
  const auto s = ConsistencyStudent::init(small_config(), NoiseSchedule{}, 3);
  const auto in = random_inputs(3, 2);
  const std::vector<double> t = {0.4, 0.8};
  const Array a = s.f_theta(in.z, in.emb, in.omega, t);
  const Array b = s.f_theta_merged(s.base(), in.z, in.emb, in.omega, t);
  EXPECT_EQ(a, b);
}

TEST(Student, TapeAndPlainPathsAgree) {
  const auto s = random_student(11);
  const auto in = random_inputs(11, 2);
  const std::vector<double> t = {0.2, 0.9};
  ad::Tape tape;
  const auto lora = nn::bind_lora(tape, s.online(), false);
  const Array a = s.f_theta(tape, lora, in.z, in.emb, in.omega, t).value();
  EXPECT_LT(ad::max_abs_diff(a, s.f_theta(in.z, in.emb, in.omega, t)), 1e-14);
}

TEST(Student, RejectsOutOfRangeConditioning) {
  const auto s = random_student(1);
  const auto in = random_inputs(1, 1);
  EXPECT_THROW(s.f_theta(in.z, in.emb, std::vector<double>{20.0}, std::vector<double>{0.5}),
               DomainError);
  EXPECT_THROW(s.f_theta(in.z, in.emb, in.omega, std::vector<double>{0.001}), DomainError);
  EXPECT_THROW(s.f_theta(Array({1, 31}), in.emb, in.omega, std::vector<double>{0.5}), ShapeError);
}

TEST(Ema, ConvexCombinationAndFixedPoint) {
  auto s = random_student(2);
  auto target = s.target();
  const auto online = s.online();
  const double before = adapter_distance(target, online);
  ema_update(target, online, 0.95);
  EXPECT_NEAR(adapter_distance(target, online), 0.95 * 0.95 * before, 1e-12 * (1 + before));
  ema_update(target, online, 0.0);
  EXPECT_EQ(adapter_distance(target, online), 0.0);
  ema_update(target, online, 0.5);
  EXPECT_EQ(adapter_distance(target, online), 0.0);
  EXPECT_THROW(ema_update(target, online, 1.5), DomainError);
}

TEST(Ema, GeometricTrackingOfFixedOnline) {
  // With online fixed, |target - online| shrinks by exactly mu per update.
  auto s = random_student(4);
  auto target = s.target();
  const double d0 = std::sqrt(adapter_distance(target, s.online()));
  for (int i = 1; i <= 10; ++i) {
    ema_update(target, s.online(), 0.9);
    EXPECT_NEAR(std::sqrt(adapter_distance(target, s.online())), d0 * std::pow(0.9, i), 1e-12);
  }
}

TEST(ConsistencySampling, TimesAndDeterminism) {
  const NoiseSchedule sched;
  const auto t4 = consistency_times(sched, 4);
  ASSERT_EQ(t4.size(), 4u);
  EXPECT_EQ(t4.front(), 1.0);
  for (std::size_t i = 1; i < t4.size(); ++i) EXPECT_LT(t4[i], t4[i - 1]);
  EXPECT_GT(t4.back(), sched.epsilon());
  EXPECT_THROW(consistency_times(sched, 0), DomainError);

  const auto s = random_student(5);
  StreamRng rng(5, Stream::gradcheck, 3);
  const Array emb = rng.normal_array({4});
  const auto a = consistency_sample(s, emb, 7.5, 4, 17);
  const auto b = consistency_sample(s, emb, 7.5, 4, 17);
  EXPECT_EQ(a.values(), b.values());
}
