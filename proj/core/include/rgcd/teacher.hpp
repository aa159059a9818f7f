#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rgcd/latent.hpp"
#include "rgcd/nn.hpp"
#include "rgcd/schedule.hpp"

namespace rgcd {

struct GuidanceRange {
  double min = 5.0;
  double max = 15.0;
};

// Noise predictor eps(z_t, c, t). Batches are [B, F*D] with one class and
// one time per row; kUnconditional selects the null prompt.
class Teacher {
 public:
  Teacher(NoiseSchedule schedule, PromptLibrary library);
  virtual ~Teacher() = default;

  virtual Array epsilon(const Array& z, std::span<const std::size_t> classes,
                        std::span<const double> t) const = 0;

  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const PromptLibrary& library() const noexcept { return library_; }

 protected:
  void check_batch(const Array& z, std::size_t classes, std::size_t times) const;

  NoiseSchedule schedule_;
  PromptLibrary library_;
};

// Exact denoiser of the Gaussian data law. The null prompt uses the mixture
// over classes with a uniform prior.
class AnalyticTeacher final : public Teacher {
 public:
  using Teacher::Teacher;

  Array epsilon(const Array& z, std::span<const std::size_t> classes,
                std::span<const double> t) const override;

  // E[z0 | z_t, c] for one flat sequence.
  std::vector<double> posterior_mean(std::span<const double> z, std::size_t cls, double t) const;
  // log p_t(z | c), mixture for kUnconditional.
  double log_density(std::span<const double> z, std::size_t cls, double t) const;

 private:
  void mixture_weights(std::span<const double> z, double alpha, double v,
                       std::vector<double>& w) const;
};

struct NeuralTeacherParams {
  std::size_t hidden = 64;
  std::size_t steps = 5000;
  std::size_t batch = 32;
  double learning_rate = 2e-3;
  double null_rate = 0.1;  // fraction of rows trained on the null prompt
  std::uint64_t seed = 0;
};

// Small gated MLP trained by noise regression on the library's data law.
class NeuralTeacher final : public Teacher {
 public:
  NeuralTeacher(NoiseSchedule schedule, PromptLibrary library, nn::GatedMlp net);

  static NeuralTeacher untrained(NoiseSchedule schedule, PromptLibrary library,
                                 const NeuralTeacherParams& params);
  static NeuralTeacher train(NoiseSchedule schedule, PromptLibrary library,
                             const NeuralTeacherParams& params);

  Array epsilon(const Array& z, std::span<const std::size_t> classes,
                std::span<const double> t) const override;

  const nn::GatedMlp& network() const noexcept { return net_; }
  std::size_t input_width() const;

  // Network input rows [z | embedding | time features].
  Array assemble_inputs(const Array& z, std::span<const std::size_t> classes,
                        std::span<const double> t) const;

 private:
  nn::GatedMlp net_;
};

// (1 + omega) eps_cond - omega eps_uncond.
Array cfg_combine(const Array& cond, const Array& uncond, double omega);
// Per-row guidance scales.
Array cfg_combine(const Array& cond, const Array& uncond, std::span<const double> omega);

// DDIM increment for a given noise estimate:
// (a_lo/a_hi) z - b_lo ((b_hi a_lo)/(a_hi b_lo) - 1) eps - z, row-wise times.
Array ddim_delta(const NoiseSchedule& schedule, const Array& z_hi, const Array& eps_hat,
                 std::span<const double> t_hi, std::span<const double> t_lo);

// Requires eps <= t_lo <= t_hi <= T per row; equal times give a zero delta.
Array ddim_psi(const Teacher& teacher, const Array& z_hi, std::span<const double> t_hi,
               std::span<const double> t_lo, std::span<const std::size_t> classes);

// z_hi + (1 + w) psi(c) - w psi(null).
Array augmented_solver_step(const Teacher& teacher, const Array& z_hi, std::span<const double> t_hi,
                            std::span<const double> t_lo, std::span<const std::size_t> classes,
                            std::span<const double> omega);

// One DDIM step with the guided noise estimate inside. ddim_sample is a chain
// of these over uniform_times(eps, T, steps + 1).
Array ddim_step(const Teacher& teacher, const Array& z, double t_hi, double t_lo,
                std::span<const std::size_t> classes, std::span<const double> omega);

// Start noise z_T ~ N(0, beta(T)^2 I) for one seed.
Array sample_start(const NoiseSchedule& schedule, LatentShape shape, std::uint64_t seed);

LatentSequence ddim_sample(const Teacher& teacher, std::size_t cls, double omega, std::size_t steps,
                           std::uint64_t seed);
// One row per seed.
Array ddim_sample_batch(const Teacher& teacher, std::span<const std::size_t> classes, double omega,
                        std::size_t steps, std::span<const std::uint64_t> seeds);

// Guided noise estimate (1 + w) eps(c) - w eps(null); w = 0 skips the null pass.
Array guided_epsilon(const Teacher& teacher, const Array& z, std::span<const std::size_t> classes,
                     std::span<const double> t, std::span<const double> omega);

// Classic RK4 on dz/dt = mu(t) z + sigma^2(t) eps / (2 beta(t)) from t_from to
// t_to (either direction) with `substeps` equal steps.
Array integrate_pfode(const Teacher& teacher, const Array& z, double t_from, double t_to,
                      std::span<const std::size_t> classes, std::span<const double> omega,
                      std::size_t substeps);

}  // namespace rgcd
