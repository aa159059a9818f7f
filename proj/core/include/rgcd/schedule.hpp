#pragma once

#include <cstddef>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd {

using ad::Array;

struct ScheduleParams {
  double rate_min = 0.1;   // b(0)
  double rate_max = 20.0;  // b(T)
  double horizon = 1.0;    // T
  double epsilon = 0.01;   // origin time, defaults to 0.01 * T
  std::size_t grid_size = 100;
};

struct AlphaBeta {
  double alpha;
  double beta;
};

struct DriftDiffusion {
  double drift;         // d log alpha / dt
  double diffusion_sq;  // sigma^2
};

// Drift and diffusion from a schedule's first-order data; shared by every family.
DriftDiffusion drift_diffusion_from(double alpha, double dalpha_dt, double beta_sq,
                                    double dbeta_sq_dt);

// Evenly spaced times with both endpoints exact.
std::vector<double> uniform_times(double lo, double hi, std::size_t count);

// Ordered times t_1 < ... < t_N on [epsilon, T]. Indices are 1-based to match
// the n / n+k notation of the training loop.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);

  std::size_t size() const noexcept { return times_.size(); }
  double at(std::size_t n) const;  // t_n, 1 <= n <= N
  const std::vector<double>& times() const noexcept { return times_; }

 private:
  std::vector<double> times_;
};

// Variance-preserving schedule with linear rate b(s) = b0 + (b1 - b0) s / T:
// alpha(t) = exp(-1/2 int_0^t b), beta(t) = sqrt(1 - alpha^2).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleParams params = {});

  const ScheduleParams& params() const noexcept { return params_; }
  double horizon() const noexcept { return params_.horizon; }
  double epsilon() const noexcept { return params_.epsilon; }
  std::size_t grid_size() const noexcept { return params_.grid_size; }

  double rate(double t) const;
  double integrated_rate(double t) const;

  AlphaBeta alpha_beta(double t) const;
  DriftDiffusion drift_diffusion(double t) const;

  // Uniform N-point grid; requires N >= skip + 2 so n ~ U[1, N-k] is non-empty.
  TimeGrid discretize(std::size_t skip) const;

 private:
  ScheduleParams params_;
};

// z_t = alpha(t) z0 + beta(t) noise.
Array perturb(const NoiseSchedule& schedule, const Array& z0, double t, const Array& noise);

}  // namespace rgcd
