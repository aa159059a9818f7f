#include "rgcd/optim.hpp"

#include <cmath>

#include "rgcd/error.hpp"

namespace rgcd {

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw DomainError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

Optimizer::Optimizer(OptimizerParams params, std::span<Array* const> tensors) : params_(params) {
  if (!(params_.learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
  for (const Array* t : tensors) {
    m_.emplace_back(t->shape(), 0.0);
    v_.emplace_back(t->shape(), 0.0);
  }
}

void Optimizer::step(std::span<Array* const> tensors, std::span<const Array> grads) {
  if (tensors.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("optimizer step: tensor count changed since construction");
  }
  ++steps_;
  const double lr = params_.learning_rate;
  if (params_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto w = tensors[i]->values();
      auto g = grads[i].values();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    }
    return;
  }
  const double b1 = params_.beta1;
  const double b2 = params_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto w = tensors[i]->values();
    auto g = grads[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    if (g.size() != w.size()) throw ShapeError("optimizer step: gradient shape mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + params_.eps);
    }
  }
}

}  // namespace rgcd
