#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rgcd/autodiff/grad_check.hpp"
#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace ad = rgcd::ad;
using ad::Array;

TEST(Array, RejectsZeroExtentAndSizeMismatch) {
  EXPECT_THROW(Array({2, 0}), rgcd::ShapeError);
  EXPECT_THROW(Array({2, 2}, std::vector<double>{1, 2, 3}), rgcd::ShapeError);
  EXPECT_THROW(Array::from_rows({{1, 2}, {3}}), rgcd::ShapeError);
}

TEST(Array, ReshapeKeepsValues) {
  const Array a = Array::from_rows({{1, 2, 3}, {4, 5, 6}});
  const Array b = a.reshaped({3, 2});
  EXPECT_EQ(b.at(2, 1), 6.0);
  EXPECT_THROW(a.reshaped({4}), rgcd::ShapeError);
}

TEST(Ops, ForwardValues) {
  ad::Tape t;
  auto a = t.constant(Array::from_rows({{1, 2}, {3, 4}}));
  auto b = t.constant(Array::vector({10, 20}));
  EXPECT_EQ((a + b).value(), Array::from_rows({{11, 22}, {13, 24}}));
  EXPECT_EQ(ad::matmul(a, a).value(), Array::from_rows({{7, 10}, {15, 22}}));
  EXPECT_EQ(ad::row_sum(a).value(), Array::vector({3, 7}));
  EXPECT_DOUBLE_EQ(ad::mean(a).value().item(), 2.5);
  EXPECT_EQ(ad::transpose(a).value(), Array::from_rows({{1, 3}, {2, 4}}));
  EXPECT_EQ(ad::gather_rows(a, {1, 1}).value(), Array::from_rows({{3, 4}, {3, 4}}));
  EXPECT_DOUBLE_EQ(ad::sqrt_shifted(t.constant(Array::scalar(0.0)), 4.0).value().item(), 2.0);
}

TEST(Ops, OnlyLeadingBatchAndScalarBroadcasts) {
  ad::Tape t;
  auto m = t.constant(Array({3, 2}, 1.0));
  EXPECT_NO_THROW(m + t.constant(Array::vector({1, 2})));
  EXPECT_NO_THROW(m * t.constant(Array::scalar(2.0)));
  // A column vector is not a trailing suffix of [3, 2].
  EXPECT_THROW(m + t.constant(Array({3, 1}, 1.0)), rgcd::ShapeError);
  EXPECT_THROW(m + t.constant(Array::vector({1, 2, 3})), rgcd::ShapeError);
  EXPECT_THROW(ad::matmul(m, m), rgcd::ShapeError);
}

TEST(Tape, SingleSweepAndScalarRoot) {
  ad::Tape t;
  auto x = t.parameter(Array::vector({1, 2}));
  auto y = ad::sum(ad::square(x));
  EXPECT_THROW(t.backward(x), rgcd::ShapeError);
  t.backward(y);
  EXPECT_EQ(t.grad(x), Array::vector({2, 4}));
  EXPECT_THROW(t.backward(y), rgcd::Error);
  EXPECT_THROW(ad::square(x), rgcd::Error);
}

TEST(Tape, RepeatedUseAccumulates) {
  ad::Tape t;
  auto x = t.parameter(Array::scalar(3.0));
  auto y = x * x + x;  // dy/dx = 2x + 1
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 7.0);
}

TEST(Tape, ConstantsGetNoGradient) {
  ad::Tape t;
  auto c = t.constant(Array::scalar(2.0));
  auto x = t.parameter(Array::scalar(5.0));
  t.backward(c * x);
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 2.0);
}

TEST(Tape, NonFiniteValuesRaise) {
  ad::Tape t;
  EXPECT_THROW(t.constant(Array::scalar(std::numeric_limits<double>::quiet_NaN())),
               rgcd::NumericError);
  auto z = t.constant(Array::scalar(0.0));
  EXPECT_THROW(t.constant(Array::scalar(1.0)) / z, rgcd::NumericError);
}

TEST(GradCheck, MatchesHandDerivative) {
  // f(x) = sum(tanh(x) * x): df/dx = tanh(x) + x (1 - tanh^2 x)
  ad::ScalarFn f = [](ad::Tape&, std::span<const ad::Var> p) {
    return ad::sum(ad::tanh(p[0]) * p[0]);
  };
  rgcd::StreamRng rng(1, rgcd::Stream::gradcheck, 0);
  for (int s = 0; s < 20; ++s) {
    const auto r = ad::grad_check(f, {rng.normal_array({3, 2})});
    EXPECT_LT(r.max_rel_error, 1e-7);
    EXPECT_EQ(r.checked, 6u);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  // A "stop-gradient" trick: the forward value uses x^2 through a constant,
  // so the tape gradient misses it.
  ad::ScalarFn f = [](ad::Tape& t, std::span<const ad::Var> p) {
    auto frozen = t.constant(p[0].value());
    return ad::sum(p[0] * frozen);
  };
  const auto r = ad::grad_check(f, {Array::vector({1.0, 2.0})});
  EXPECT_GT(r.max_rel_error, 0.1);
}
