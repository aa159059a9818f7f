#include "rgcd/schedule.hpp"

#include <cmath>
#include <string>

#include "rgcd/error.hpp"

namespace rgcd {

DriftDiffusion drift_diffusion_from(double alpha, double dalpha_dt, double beta_sq,
                                    double dbeta_sq_dt) {
  const double dlog_alpha = dalpha_dt / alpha;
  return DriftDiffusion{dlog_alpha, dbeta_sq_dt - 2.0 * dlog_alpha * beta_sq};
}

std::vector<double> uniform_times(double lo, double hi, std::size_t count) {
  if (count < 2) throw DomainError("uniform_times needs at least two points");
  std::vector<double> t(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) t[i] = lo + static_cast<double>(i) * step;
  t.front() = lo;
  t.back() = hi;
  return t;
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw DomainError("time grid must be strictly increasing");
  }
}

double TimeGrid::at(std::size_t n) const {
  if (n < 1 || n > times_.size()) {
    throw DomainError("grid index " + std::to_string(n) + " outside [1, " +
                      std::to_string(times_.size()) + "]");
  }
  return times_[n - 1];
}

NoiseSchedule::NoiseSchedule(ScheduleParams params) : params_(params) {
  std::vector<std::string> bad;
  if (!(params_.rate_min >= 0.0)) bad.push_back("schedule.rate_min must be >= 0");
  if (!(params_.rate_max > params_.rate_min)) bad.push_back("schedule.rate_max must exceed rate_min");
  if (!(params_.horizon > 0.0)) bad.push_back("schedule.horizon must be > 0");
  if (!(params_.epsilon > 0.0 && params_.epsilon < params_.horizon)) {
    bad.push_back("schedule.epsilon must lie in (0, horizon)");
  }
  if (params_.grid_size < 2) bad.push_back("grid.size must be >= 2");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

double NoiseSchedule::rate(double t) const {
  return params_.rate_min + (params_.rate_max - params_.rate_min) * t / params_.horizon;
}

double NoiseSchedule::integrated_rate(double t) const {
  return params_.rate_min * t + (params_.rate_max - params_.rate_min) * t * t / (2.0 * params_.horizon);
}

AlphaBeta NoiseSchedule::alpha_beta(double t) const {
  if (!(t >= 0.0 && t <= params_.horizon)) {
    throw DomainError("t = " + std::to_string(t) + " outside [0, T]");
  }
  const double integral = integrated_rate(t);
  // beta^2 = 1 - exp(-integral) via expm1 keeps precision near t = 0.
  return AlphaBeta{std::exp(-0.5 * integral), std::sqrt(-std::expm1(-integral))};
}

DriftDiffusion NoiseSchedule::drift_diffusion(double t) const {
  if (!(t > 0.0 && t <= params_.horizon)) {
    throw DomainError("t = " + std::to_string(t) + " outside (0, T]");
  }
  const auto [alpha, beta] = alpha_beta(t);
  const double b = rate(t);
  const double dalpha = -0.5 * b * alpha;
  const double dbeta_sq = -2.0 * alpha * dalpha;
  return drift_diffusion_from(alpha, dalpha, beta * beta, dbeta_sq);
}

TimeGrid NoiseSchedule::discretize(std::size_t skip) const {
  if (params_.grid_size < skip + 2) {
    throw DomainError("grid size N = " + std::to_string(params_.grid_size) +
                      " must satisfy N >= k + 2 with k = " + std::to_string(skip));
  }
  return TimeGrid(uniform_times(params_.epsilon, params_.horizon, params_.grid_size));
}

Array perturb(const NoiseSchedule& schedule, const Array& z0, double t, const Array& noise) {
  if (z0.shape() != noise.shape()) {
    throw ShapeError("perturb: data " + ad::shape_string(z0.shape()) + " vs noise " +
                     ad::shape_string(noise.shape()));
  }
  const auto [alpha, beta] = schedule.alpha_beta(t);
  Array out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * z0[i] + beta * noise[i];
  return out;
}

}  // namespace rgcd
