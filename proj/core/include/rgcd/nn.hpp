#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rgcd/autodiff/array.hpp"
#include "rgcd/autodiff/tape.hpp"

namespace rgcd {
class StreamRng;
}

namespace rgcd::nn {

using ad::Array;
using ad::Tape;
using ad::Var;

// Fully connected layer, weight stored [out, in].
struct Dense {
  Array weight;
  Array bias;

  std::size_t in() const { return weight.shape()[1]; }
  std::size_t out() const { return weight.shape()[0]; }
};

// Low-rank adapter of one Dense layer: effective weight = W + scale * up * down,
// with down [r, in] and up [out, r].
struct LoraFactors {
  Array down;
  Array up;
};

struct LoraAdapter {
  std::size_t rank = 0;
  double scale = 1.0;
  std::vector<LoraFactors> layers;

  // Flat views in layer order (down, up, down, up, ...).
  std::vector<Array*> tensors();
  std::vector<const Array*> tensors() const;
};

Dense lora_merge(const Dense& base, const LoraFactors& factors, double scale);

struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;
};

// Tape handles of a layer: the transposed weight [in, out] and bias [out].
struct LayerVars {
  Var weight_t;
  Var bias;
};

struct LoraBinding {
  double scale = 1.0;
  std::vector<Var> down_t;  // [in, r]
  std::vector<Var> up_t;    // [r, out]
};

// Two tanh hidden layers feeding an additive head and a multiplicative head:
//   out = head_add(h) + head_gate(h) * gate_input
// The gate lets the output track a rescaled copy of its latent input without
// routing every coordinate through the hidden bottleneck.
class GatedMlp {
 public:
  static constexpr std::size_t kLayers = 4;

  GatedMlp() = default;
  GatedMlp(MlpShape shape, std::vector<Dense> layers);

  // Hidden layers ~ N(0, 1/fan_in); heads scaled down by `head_scale`.
  static GatedMlp init(MlpShape shape, StreamRng& rng, double head_scale);

  const MlpShape& shape() const noexcept { return shape_; }
  const std::vector<Dense>& layers() const noexcept { return layers_; }
  void set_layers(std::vector<Dense> layers);

  std::vector<LayerVars> bind_constant(Tape& tape) const;
  // Weights become tape parameters; returns the parameter Vars (weight,
  // bias per layer) alongside the layer handles.
  std::vector<LayerVars> bind_trainable(Tape& tape, std::vector<Var>& params) const;

  Var forward(Tape& tape, std::span<const LayerVars> layers, Var x, Var gate_input,
              const LoraBinding* lora = nullptr) const;

  std::vector<Array*> tensors();

 private:
  void refresh_cache();

  MlpShape shape_;
  std::vector<Dense> layers_;
  std::vector<Array> weight_t_;
};

LoraAdapter init_lora(const GatedMlp& base, std::size_t rank, double scale, StreamRng& rng);
GatedMlp lora_merge(const GatedMlp& base, const LoraAdapter& adapter);

// Binds adapter factors as constants or as parameters. `params` receives the
// (down, up) parameter Vars in layer order when trainable.
LoraBinding bind_lora(Tape& tape, const LoraAdapter& adapter, bool trainable,
                      std::vector<Var>* params = nullptr);
LoraBinding bind_lora_vars(Tape& tape, std::span<const Var> factors, double scale);

// Features of t in log-time tau = log(t/eps)/log(T/eps):
// [tau, tau^2, sin(k pi tau), cos(k pi tau) for k = 1..3].
inline constexpr std::size_t kTimeFeatures = 8;
void time_features(double t, double epsilon, double horizon, std::span<double> out);

// Polynomial embedding of the normalized guidance scale u: [u, u^2, u^3, u^4].
inline constexpr std::size_t kGuidanceFeatures = 4;
void guidance_features(double omega, double omega_min, double omega_max, std::span<double> out);

}  // namespace rgcd::nn
