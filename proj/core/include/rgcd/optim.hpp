#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd {

using ad::Array;

enum class OptimizerKind { adam, sgd };

const char* optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerParams {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-order optimizer over a fixed list of tensors. Moments are kept per
// tensor so the state can be checkpointed and restored exactly.
class Optimizer {
 public:
  Optimizer(OptimizerParams params, std::span<Array* const> tensors);

  void step(std::span<Array* const> tensors, std::span<const Array> grads);

  const OptimizerParams& params() const noexcept { return params_; }
  std::size_t steps() const noexcept { return steps_; }
  std::vector<Array>& first_moments() noexcept { return m_; }
  std::vector<Array>& second_moments() noexcept { return v_; }
  const std::vector<Array>& first_moments() const noexcept { return m_; }
  const std::vector<Array>& second_moments() const noexcept { return v_; }
  void set_steps(std::size_t steps) noexcept { steps_ = steps; }

 private:
  OptimizerParams params_;
  std::vector<Array> m_;
  std::vector<Array> v_;
  std::size_t steps_ = 0;
};

}  // namespace rgcd
