#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "rgcd/autodiff/tape.hpp"
#include "rgcd/latent.hpp"
#include "rgcd/nn.hpp"
#include "rgcd/schedule.hpp"
#include "rgcd/teacher.hpp"

namespace rgcd {

struct BoundaryFns {
  double sigma_data = 0.5;
  double epsilon = 0.01;
};

struct BoundaryValues {
  double skip;
  double out;
};

// c_skip = sd^2 / ((t-eps)^2 + sd^2), c_out = (t-eps) / sqrt((t-eps)^2 + sd^2).
BoundaryValues boundary(const BoundaryFns& fns, double t);
// d/dt of both coefficients.
BoundaryValues boundary_derivative(const BoundaryFns& fns, double t);

struct StudentConfig {
  LatentShape latent;
  std::size_t embed_dim = 4;
  std::size_t hidden = 64;
  std::size_t lora_rank = 8;
  double lora_scale = 1.0;
  double head_scale = 0.01;
  double sigma_data = 0.5;
  double input_scale = 0.1;  // z enters the hidden trunk multiplied by this
  GuidanceRange guidance;
};

// f(z, w, c, t) = c_skip(t) z + c_out(t) F(z, w, c, t) where F is a frozen
// gated MLP plus a LoRA adapter. The student keeps the online adapter and its
// EMA target side by side.
class ConsistencyStudent {
 public:
  ConsistencyStudent(StudentConfig config, NoiseSchedule schedule, nn::GatedMlp base,
                     nn::LoraAdapter online, nn::LoraAdapter target);

  static ConsistencyStudent init(const StudentConfig& config, const NoiseSchedule& schedule,
                                 std::uint64_t seed);
  // Copies a neural teacher's weights; the guidance inputs start with zero weight.
  static ConsistencyStudent from_teacher(const StudentConfig& config, const NeuralTeacher& teacher,
                                         std::uint64_t seed);

  const StudentConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  BoundaryFns boundary_fns() const { return {config_.sigma_data, schedule_.epsilon()}; }
  const nn::GatedMlp& base() const noexcept { return base_; }
  nn::LoraAdapter& online() noexcept { return online_; }
  const nn::LoraAdapter& online() const noexcept { return online_; }
  nn::LoraAdapter& target() noexcept { return target_; }
  const nn::LoraAdapter& target() const noexcept { return target_; }
  std::size_t input_width() const;

  // Rows [input_scale * z | embedding | time features | guidance features].
  Array assemble_inputs(const Array& z, const Array& embeddings, std::span<const double> omega,
                        std::span<const double> t) const;

  // Differentiable in whatever `lora` was bound as. z and the
  // conditioning are data.
  ad::Var f_theta(ad::Tape& tape, const nn::LoraBinding& lora, const Array& z,
                  const Array& embeddings, std::span<const double> omega,
                  std::span<const double> t) const;

  Array f_theta(const nn::LoraAdapter& adapter, const Array& z, const Array& embeddings,
                std::span<const double> omega, std::span<const double> t) const;
  Array f_theta(const Array& z, const Array& embeddings, std::span<const double> omega,
                std::span<const double> t) const {
    return f_theta(online_, z, embeddings, omega, t);
  }

  // Same function through merged base weights, no adapter.
  Array f_theta_merged(const nn::GatedMlp& merged, const Array& z, const Array& embeddings,
                       std::span<const double> omega, std::span<const double> t) const;

 private:
  void check_inputs(const Array& z, const Array& embeddings, std::span<const double> omega,
                    std::span<const double> t) const;
  ad::Var assemble(ad::Tape& tape, const nn::GatedMlp& net, const nn::LoraBinding* lora,
                   const Array& z, const Array& embeddings, std::span<const double> omega,
                   std::span<const double> t) const;

  StudentConfig config_;
  NoiseSchedule schedule_;
  nn::GatedMlp base_;
  nn::LoraAdapter online_;
  nn::LoraAdapter target_;
};

// target <- rate * target + (1 - rate) * online, elementwise.
void ema_update(nn::LoraAdapter& target, const nn::LoraAdapter& online, double rate);
// Squared L2 distance between two adapters' factors.
double adapter_distance(const nn::LoraAdapter& a, const nn::LoraAdapter& b);

// Consistency times for `steps` evaluations: uniform in index space from T
// toward eps, eps itself excluded.
std::vector<double> consistency_times(const NoiseSchedule& schedule, std::size_t steps);

// Predict, re-noise, predict ... with the online adapter. Rows of
// `embeddings` pair with `seeds`.
Array consistency_sample_batch(const ConsistencyStudent& student, const nn::LoraAdapter& adapter,
                               const Array& embeddings, double omega, std::size_t steps,
                               std::span<const std::uint64_t> seeds);
LatentSequence consistency_sample(const ConsistencyStudent& student, const Array& embedding,
                                  double omega, std::size_t steps, std::uint64_t seed);

}  // namespace rgcd
