#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rgcd/dataset.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"
#include "rgcd/teacher.hpp"

using namespace rgcd;

namespace {

AnalyticTeacher make_teacher(double spread = 0.005, std::size_t classes = 3) {
  RunConfig c;
  c.data.classes = classes;
  c.data.spread = spread;
  const auto data = generate_dataset(c, 7);
  return AnalyticTeacher(make_schedule(c), data.library());
}

double norm(const Array& a) { return ad::l2_norm(a.values()); }

}  // namespace

TEST(AnalyticTeacher, EpsilonIsScaledScore) {
  // eps = -beta * grad log p_t(z | c), checked by central differences,
  // including the mixture used for the null prompt.
  const auto teacher = make_teacher(0.3);
  StreamRng rng(3, Stream::gradcheck, 0);
  for (std::size_t cls : {std::size_t{0}, std::size_t{2}, kUnconditional}) {
    for (double t : {0.05, 0.4, 0.95}) {
      Array z = rng.normal_array({1, 32});
      const std::size_t classes[] = {cls};
      const double times[] = {t};
      const Array eps = teacher.epsilon(z, classes, times);
      const double beta = teacher.schedule().alpha_beta(t).beta;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = 1e-5;
        std::vector<double> up(z.values().begin(), z.values().end()), dn = up;
        up[i] += h;
        dn[i] -= h;
        const double g = (teacher.log_density(up, cls, t) - teacher.log_density(dn, cls, t)) / (2 * h);
        EXPECT_NEAR(eps[i], -beta * g, 1e-6 * std::max(1.0, std::abs(eps[i])));
      }
    }
  }
}

TEST(AnalyticTeacher, TweedieMatchesPosteriorMean) {
  const auto teacher = make_teacher(0.2);
  StreamRng rng(4, Stream::gradcheck, 0);
  const Array z = rng.normal_array({1, 32});
  const std::size_t classes[] = {1};
  const double t = 0.3, times[] = {t};
  const Array eps = teacher.epsilon(z, classes, times);
  const auto [a, b] = teacher.schedule().alpha_beta(t);
  const auto mean = teacher.posterior_mean(z.values(), 1, t);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR((z[i] - b * eps[i]) / a, mean[i], 1e-10);
}

TEST(AnalyticTeacher, RejectsTimesOutsideRange) {
  const auto teacher = make_teacher();
  const Array z({1, 32});
  const std::size_t classes[] = {0};
  const double early[] = {0.001}, late[] = {1.01};
  EXPECT_THROW(teacher.epsilon(z, classes, early), DomainError);
  EXPECT_THROW(teacher.epsilon(z, classes, late), DomainError);
}

TEST(Cfg, CombinesLinearly) {
  const Array c = Array::vector({1.0, 2.0}), u = Array::vector({0.0, 4.0});
  EXPECT_EQ(cfg_combine(c, u, 0.0), c);
  EXPECT_EQ(cfg_combine(c, u, 1.0), Array::vector({2.0, 0.0}));
}

TEST(Ddim, SingleStepMatchesRk4Oracle) {
  // error < 1e-3 |z| for steps <= 0.05 anywhere on [eps, T]
  const auto teacher = make_teacher();
  StreamRng rng(5, Stream::gradcheck, 1);
  const std::size_t classes[] = {0};
  const double omega[] = {0.0};
  for (double t_hi : {0.07, 0.2, 0.5, 0.8, 1.0}) {
    for (double step : {0.05, 0.02, 0.01}) {
      const double t_lo = t_hi - step;
      // A state on the forward process of class 0.
      const auto ab = teacher.schedule().alpha_beta(t_hi);
      Array z = rng.normal_array({1, 32}, ab.beta);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += ab.alpha * teacher.library().mean(0)[i];
      const double th[] = {t_hi}, tl[] = {t_lo};
      Array ddim = ddim_psi(teacher, z, th, tl, classes);
      for (std::size_t i = 0; i < z.size(); ++i) ddim[i] += z[i];
      const Array rk = integrate_pfode(teacher, z, t_hi, t_lo, classes, omega, 400);
      Array diff = ddim;
      for (std::size_t i = 0; i < z.size(); ++i) diff[i] -= rk[i];
      EXPECT_LT(norm(diff), 1e-3 * norm(z)) << t_hi << " " << step;
    }
  }
}

TEST(Ddim, ZeroLengthStepIsExactlyZero) {
  const auto teacher = make_teacher();
  StreamRng rng(6, Stream::gradcheck, 0);
  const Array z = rng.normal_array({2, 32});
  const std::size_t classes[] = {0, 1};
  const double t[] = {0.4, 0.4};
  const Array psi = ddim_psi(teacher, z, t, t, classes);
  for (double v : psi.values()) EXPECT_EQ(v, 0.0);
}

TEST(Ddim, RejectsReversedTimes) {
  const auto teacher = make_teacher();
  const Array z({1, 32});
  const std::size_t classes[] = {0};
  const double hi[] = {0.3}, lo[] = {0.4};
  EXPECT_THROW(ddim_psi(teacher, z, hi, lo, classes), DomainError);
}

TEST(AugmentedStep, AffineInOmegaAndCollapsesAtZero) {
  const auto teacher = make_teacher();
  StreamRng rng(8, Stream::gradcheck, 0);
  const Array z = rng.normal_array({1, 32}, 0.8);
  const std::size_t classes[] = {2};
  const double th[] = {0.6}, tl[] = {0.55};
  auto step = [&](double w) {
    const double om[] = {w};
    return augmented_solver_step(teacher, z, th, tl, classes, om);
  };
  const Array a = step(0.0), b = step(5.0), c = step(12.5);
  // c - a = 2.5 (b - a)
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(c[i] - a[i], 2.5 * (b[i] - a[i]), 1e-10);
  const Array psi = ddim_psi(teacher, z, th, tl, classes);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], z[i] + psi[i], 1e-15);
  const double neg[] = {-1.0};
  EXPECT_THROW(augmented_solver_step(teacher, z, th, tl, classes, neg), DomainError);
}

TEST(Sampling, DeterministicPerSeed) {
  const auto teacher = make_teacher();
  const auto a = ddim_sample(teacher, 1, 7.5, 20, 42);
  const auto b = ddim_sample(teacher, 1, 7.5, 20, 42);
  const auto c = ddim_sample(teacher, 1, 7.5, 20, 43);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
}

TEST(Sampling, UnguidedTeacherReachesClassLaw) {
  // 50-step unguided DDIM from the exact denoiser lands near the class mean.
  const auto teacher = make_teacher();
  const auto& mean = teacher.library().mean(0);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = ddim_sample(teacher, 0, 0.0, 50, s);
    const Array row = x.flat_row();
    double d = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) d += (row[i] - mean[i]) * (row[i] - mean[i]);
    worst = std::max(worst, std::sqrt(d));
  }
  EXPECT_LT(worst, 0.1 * norm(mean));
}

TEST(NeuralTeacher, LearnsTheNoiseRegression) {
  RunConfig c;
  c.data.classes = 2;
  const auto data = generate_dataset(c, 9);
  NeuralTeacherParams p;
  p.steps = 300;
  p.hidden = 32;
  const auto untrained = NeuralTeacher::untrained(make_schedule(c), data.library(), p);
  const auto trained = NeuralTeacher::train(make_schedule(c), data.library(), p);
  const AnalyticTeacher exact(make_schedule(c), data.library());
  StreamRng rng(10, Stream::gradcheck, 0);
  double err_u = 0.0, err_t = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(0.05, 1.0);
    const Array z = perturb(exact.schedule(), data.sample(i % 2, i).reshaped({1, 32}), t,
                            rng.normal_array({1, 32}));
    const std::size_t cls[] = {static_cast<std::size_t>(i % 2)};
    const double ts[] = {t};
    const Array e = exact.epsilon(z, cls, ts);
    const Array a = untrained.epsilon(z, cls, ts), b = trained.epsilon(z, cls, ts);
    for (std::size_t k = 0; k < e.size(); ++k) {
      err_u += (a[k] - e[k]) * (a[k] - e[k]);
      err_t += (b[k] - e[k]) * (b[k] - e[k]);
    }
  }
  EXPECT_LT(err_t, 0.5 * err_u);
}
