#include "rgcd/nn.hpp"

#include <cmath>
#include <numbers>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace rgcd::nn {

namespace {

Array transposed(const Array& a) {
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  Array t({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = a.at(i, j);
  }
  return t;
}

void check_factors(const Dense& base, const LoraFactors& f) {
  if (f.down.rank() != 2 || f.up.rank() != 2 || f.down.shape()[1] != base.in() ||
      f.up.shape()[0] != base.out() || f.up.shape()[1] != f.down.shape()[0]) {
    throw ShapeError("LoRA factors down " + ad::shape_string(f.down.shape()) + ", up " +
                     ad::shape_string(f.up.shape()) + " do not fit a " + std::to_string(base.out()) +
                     "x" + std::to_string(base.in()) + " layer");
  }
}

}  // namespace

std::vector<Array*> LoraAdapter::tensors() {
  std::vector<Array*> out;
  for (auto& l : layers) {
    out.push_back(&l.down);
    out.push_back(&l.up);
  }
  return out;
}

std::vector<const Array*> LoraAdapter::tensors() const {
  std::vector<const Array*> out;
  for (const auto& l : layers) {
    out.push_back(&l.down);
    out.push_back(&l.up);
  }
  return out;
}

Dense lora_merge(const Dense& base, const LoraFactors& factors, double scale) {
  check_factors(base, factors);
  Dense merged = base;
  const std::size_t r = factors.down.shape()[0];
  for (std::size_t o = 0; o < base.out(); ++o) {
    for (std::size_t i = 0; i < base.in(); ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += factors.up.at(o, k) * factors.down.at(k, i);
      merged.weight.at(o, i) += scale * acc;
    }
  }
  return merged;
}

GatedMlp::GatedMlp(MlpShape shape, std::vector<Dense> layers) : shape_(shape) {
  set_layers(std::move(layers));
}

void GatedMlp::set_layers(std::vector<Dense> layers) {
  if (layers.size() != kLayers) throw ShapeError("gated MLP needs exactly 4 layers");
  const std::size_t ins[kLayers] = {shape_.input, shape_.hidden, shape_.hidden, shape_.hidden};
  const std::size_t outs[kLayers] = {shape_.hidden, shape_.hidden, shape_.output, shape_.output};
  for (std::size_t l = 0; l < kLayers; ++l) {
    const Dense& d = layers[l];
    if (d.weight.rank() != 2 || d.in() != ins[l] || d.out() != outs[l] || d.bias.size() != outs[l]) {
      throw ShapeError("layer " + std::to_string(l) + " has weight " +
                       ad::shape_string(d.weight.shape()) + ", expected [" + std::to_string(outs[l]) +
                       "," + std::to_string(ins[l]) + "]");
    }
  }
  layers_ = std::move(layers);
  refresh_cache();
}

void GatedMlp::refresh_cache() {
  weight_t_.clear();
  for (const auto& d : layers_) weight_t_.push_back(transposed(d.weight));
}

GatedMlp GatedMlp::init(MlpShape shape, StreamRng& rng, double head_scale) {
  auto dense = [&](std::size_t in, std::size_t out, double w_std, double b_std) {
    return Dense{rng.normal_array({out, in}, w_std), rng.normal_array({out}, b_std)};
  };
  const double hin = 1.0 / std::sqrt(static_cast<double>(shape.input));
  const double hh = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  std::vector<Dense> layers;
  layers.push_back(dense(shape.input, shape.hidden, hin, 0.5));
  layers.push_back(dense(shape.hidden, shape.hidden, hh, 0.5));
  layers.push_back(dense(shape.hidden, shape.output, head_scale * hh, 0.0));
  layers.push_back(dense(shape.hidden, shape.output, head_scale * hh, 0.0));
  return GatedMlp(shape, std::move(layers));
}

std::vector<LayerVars> GatedMlp::bind_constant(Tape& tape) const {
  std::vector<LayerVars> out;
  for (std::size_t l = 0; l < kLayers; ++l) {
    out.push_back({tape.constant(weight_t_[l]), tape.constant(layers_[l].bias)});
  }
  return out;
}

std::vector<LayerVars> GatedMlp::bind_trainable(Tape& tape, std::vector<Var>& params) const {
  std::vector<LayerVars> out;
  for (const auto& d : layers_) {
    Var w = tape.parameter(d.weight);
    Var b = tape.parameter(d.bias);
    params.push_back(w);
    params.push_back(b);
    out.push_back({ad::transpose(w), b});
  }
  return out;
}

Var GatedMlp::forward(Tape& tape, std::span<const LayerVars> layers, Var x, Var gate_input,
                      const LoraBinding* lora) const {
  (void)tape;
  if (layers.size() != kLayers) throw ShapeError("forward needs 4 bound layers");
  if (lora && (lora->down_t.size() != kLayers || lora->up_t.size() != kLayers)) {
    throw ShapeError("LoRA binding must cover all 4 layers");
  }
  auto apply = [&](std::size_t l, Var in) {
    Var y = ad::add(ad::matmul(in, layers[l].weight_t), layers[l].bias);
    if (lora) {
      Var delta = ad::matmul(ad::matmul(in, lora->down_t[l]), lora->up_t[l]);
      y = ad::add(y, ad::scale(delta, lora->scale));
    }
    return y;
  };
  Var h1 = ad::tanh(apply(0, x));
  Var h2 = ad::tanh(apply(1, h1));
  Var additive = apply(2, h2);
  Var gate = apply(3, h2);
  return ad::add(additive, ad::mul(gate, gate_input));
}

std::vector<Array*> GatedMlp::tensors() {
  std::vector<Array*> out;
  for (auto& d : layers_) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  }
  return out;
}

LoraAdapter init_lora(const GatedMlp& base, std::size_t rank, double scale, StreamRng& rng) {
  if (rank < 1) throw DomainError("LoRA rank must be >= 1");
  LoraAdapter a;
  a.rank = rank;
  a.scale = scale;
  for (const auto& d : base.layers()) {
    a.layers.push_back(LoraFactors{
        rng.normal_array({rank, d.in()}, 1.0 / std::sqrt(static_cast<double>(d.in()))),
        Array({d.out(), rank}, 0.0)});
  }
  return a;
}

GatedMlp lora_merge(const GatedMlp& base, const LoraAdapter& adapter) {
  if (adapter.layers.size() != GatedMlp::kLayers) throw ShapeError("adapter must cover all 4 layers");
  std::vector<Dense> merged;
  for (std::size_t l = 0; l < GatedMlp::kLayers; ++l) {
    merged.push_back(lora_merge(base.layers()[l], adapter.layers[l], adapter.scale));
  }
  return GatedMlp(base.shape(), std::move(merged));
}

LoraBinding bind_lora(Tape& tape, const LoraAdapter& adapter, bool trainable,
                      std::vector<Var>* params) {
  std::vector<Var> factors;
  for (const auto& l : adapter.layers) {
    if (trainable) {
      factors.push_back(tape.parameter(l.down));
      factors.push_back(tape.parameter(l.up));
    } else {
      factors.push_back(tape.constant(l.down));
      factors.push_back(tape.constant(l.up));
    }
  }
  if (params) params->insert(params->end(), factors.begin(), factors.end());
  return bind_lora_vars(tape, factors, adapter.scale);
}

LoraBinding bind_lora_vars(Tape& tape, std::span<const Var> factors, double scale) {
  (void)tape;
  if (factors.size() != 2 * GatedMlp::kLayers) throw ShapeError("expected (down, up) per layer");
  LoraBinding b;
  b.scale = scale;
  for (std::size_t l = 0; l < GatedMlp::kLayers; ++l) {
    b.down_t.push_back(ad::transpose(factors[2 * l]));
    b.up_t.push_back(ad::transpose(factors[2 * l + 1]));
  }
  return b;
}

void time_features(double t, double epsilon, double horizon, std::span<double> out) {
  if (out.size() != kTimeFeatures) throw ShapeError("time features need 8 slots");
  const double tau = std::log(t / epsilon) / std::log(horizon / epsilon);
  out[0] = tau;
  out[1] = tau * tau;
  for (int k = 1; k <= 3; ++k) {
    out[2 * k] = std::sin(k * std::numbers::pi * tau);
    out[2 * k + 1] = std::cos(k * std::numbers::pi * tau);
  }
}

void guidance_features(double omega, double omega_min, double omega_max, std::span<double> out) {
  if (out.size() != kGuidanceFeatures) throw ShapeError("guidance features need 4 slots");
  const double range = omega_max - omega_min;
  const double u = range > 0.0 ? (omega - omega_min) / range : 0.0;
  double p = u;
  for (auto& v : out) {
    v = p;
    p *= u;
  }
}

}  // namespace rgcd::nn
