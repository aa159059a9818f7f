#include "rgcd/student.hpp"

#include <algorithm>
#include <cmath>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace rgcd {

BoundaryValues boundary(const BoundaryFns& fns, double t) {
  if (!(t >= fns.epsilon)) {
    throw DomainError("boundary functions need t >= eps, got t = " + std::to_string(t));
  }
  const double d = t - fns.epsilon;
  const double s2 = fns.sigma_data * fns.sigma_data;
  const double q = d * d + s2;
  return {s2 / q, d / std::sqrt(q)};
}

BoundaryValues boundary_derivative(const BoundaryFns& fns, double t) {
  if (!(t >= fns.epsilon)) throw DomainError("boundary functions need t >= eps");
  const double d = t - fns.epsilon;
  const double s2 = fns.sigma_data * fns.sigma_data;
  const double q = d * d + s2;
  return {-2.0 * s2 * d / (q * q), s2 / (q * std::sqrt(q))};
}

ConsistencyStudent::ConsistencyStudent(StudentConfig config, NoiseSchedule schedule,
                                       nn::GatedMlp base, nn::LoraAdapter online,
                                       nn::LoraAdapter target)
    : config_(config),
      schedule_(std::move(schedule)),
      base_(std::move(base)),
      online_(std::move(online)),
      target_(std::move(target)) {
  if (!(config_.sigma_data > 0.0)) throw DomainError("sigma_data must be > 0");
  if (!(config_.input_scale > 0.0)) throw DomainError("input_scale must be > 0");
  if (!(config_.guidance.min >= 0.0 && config_.guidance.max >= config_.guidance.min)) {
    throw DomainError("guidance range must satisfy 0 <= min <= max");
  }
  if (base_.shape().input != input_width() || base_.shape().output != config_.latent.flat()) {
    throw ShapeError("student network does not match latent, embedding and feature widths");
  }
  for (const auto* a : {&online_, &target_}) {
    if (a->layers.size() != nn::GatedMlp::kLayers) throw ShapeError("adapter must cover 4 layers");
    for (std::size_t l = 0; l < nn::GatedMlp::kLayers; ++l) {
      // lora_merge validates the factor shapes against the base layer.
      (void)nn::lora_merge(base_.layers()[l], a->layers[l], a->scale);
    }
  }
}

std::size_t ConsistencyStudent::input_width() const {
  return config_.latent.flat() + config_.embed_dim + nn::kTimeFeatures + nn::kGuidanceFeatures;
}

ConsistencyStudent ConsistencyStudent::init(const StudentConfig& config,
                                            const NoiseSchedule& schedule, std::uint64_t seed) {
  const std::size_t k = config.latent.flat();
  const nn::MlpShape shape{k + config.embed_dim + nn::kTimeFeatures + nn::kGuidanceFeatures,
                           config.hidden, k};
  StreamRng base_rng(seed, Stream::init, 0);
  auto base = nn::GatedMlp::init(shape, base_rng, config.head_scale);
  StreamRng lora_rng(seed, Stream::init, 1);
  auto online = nn::init_lora(base, config.lora_rank, config.lora_scale, lora_rng);
  auto target = online;
  return ConsistencyStudent(config, schedule, std::move(base), std::move(online),
                            std::move(target));
}

ConsistencyStudent ConsistencyStudent::from_teacher(const StudentConfig& config,
                                                    const NeuralTeacher& teacher,
                                                    std::uint64_t seed) {
  const auto& tnet = teacher.network();
  if (tnet.shape().hidden != config.hidden || tnet.shape().output != config.latent.flat() ||
      teacher.library().embed_dim() != config.embed_dim) {
    throw ShapeError("teacher network widths do not match the student config");
  }
  const std::size_t t_in = tnet.shape().input;
  const std::size_t s_in = t_in + nn::kGuidanceFeatures;
  std::vector<nn::Dense> layers = tnet.layers();
  Array w({config.hidden, s_in}, 0.0);
  for (std::size_t o = 0; o < config.hidden; ++o) {
    for (std::size_t i = 0; i < t_in; ++i) {
      // Undo the trunk input scaling on the latent columns so the copied
      // network computes the teacher's function.
      const double gain = i < config.latent.flat() ? 1.0 / config.input_scale : 1.0;
      w.at(o, i) = gain * layers[0].weight.at(o, i);
    }
  }
  layers[0].weight = std::move(w);
  nn::GatedMlp base({s_in, config.hidden, config.latent.flat()}, std::move(layers));
  StreamRng lora_rng(seed, Stream::init, 1);
  auto online = nn::init_lora(base, config.lora_rank, config.lora_scale, lora_rng);
  auto target = online;
  return ConsistencyStudent(config, teacher.schedule(), std::move(base), std::move(online),
                            std::move(target));
}

void ConsistencyStudent::check_inputs(const Array& z, const Array& embeddings,
                                      std::span<const double> omega,
                                      std::span<const double> t) const {
  const std::size_t k = config_.latent.flat();
  if (z.rank() != 2 || z.cols() != k) {
    throw ShapeError("student input " + ad::shape_string(z.shape()) + " is not [B, " +
                     std::to_string(k) + "]");
  }
  const std::size_t b = z.rows();
  if (embeddings.rank() != 2 || embeddings.rows() != b || embeddings.cols() != config_.embed_dim) {
    throw ShapeError("student embeddings " + ad::shape_string(embeddings.shape()) +
                     " do not pair with the batch");
  }
  if (omega.size() != b || t.size() != b) throw ShapeError("one guidance scale and time per row");
  for (std::size_t r = 0; r < b; ++r) {
    if (!(t[r] >= schedule_.epsilon() && t[r] <= schedule_.horizon())) {
      throw DomainError("student time " + std::to_string(t[r]) + " outside [eps, T]");
    }
    if (!(omega[r] >= config_.guidance.min && omega[r] <= config_.guidance.max)) {
      throw DomainError("guidance scale " + std::to_string(omega[r]) + " outside [" +
                        std::to_string(config_.guidance.min) + ", " +
                        std::to_string(config_.guidance.max) + "]");
    }
  }
}

Array ConsistencyStudent::assemble_inputs(const Array& z, const Array& embeddings,
                                          std::span<const double> omega,
                                          std::span<const double> t) const {
  check_inputs(z, embeddings, omega, t);
  const std::size_t k = z.cols();
  const std::size_t dc = config_.embed_dim;
  const std::size_t width = input_width();
  Array x({z.rows(), width});
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double* row = x.values().data() + r * width;
    for (std::size_t j = 0; j < k; ++j) row[j] = config_.input_scale * z[r * k + j];
    std::copy_n(embeddings.values().data() + r * dc, dc, row + k);
    nn::time_features(t[r], schedule_.epsilon(), schedule_.horizon(),
                      std::span<double>(row + k + dc, nn::kTimeFeatures));
    nn::guidance_features(omega[r], config_.guidance.min, config_.guidance.max,
                          std::span<double>(row + k + dc + nn::kTimeFeatures, nn::kGuidanceFeatures));
  }
  return x;
}

ad::Var ConsistencyStudent::assemble(ad::Tape& tape, const nn::GatedMlp& net,
                                     const nn::LoraBinding* lora, const Array& z,
                                     const Array& embeddings, std::span<const double> omega,
                                     std::span<const double> t) const {
  const Array x = assemble_inputs(z, embeddings, omega, t);
  const std::size_t k = z.cols();
  Array skip_z(z.shape());
  Array c_out(z.shape());
  const BoundaryFns fns = boundary_fns();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto c = boundary(fns, t[r]);
    for (std::size_t j = r * k; j < (r + 1) * k; ++j) {
      skip_z[j] = c.skip * z[j];
      c_out[j] = c.out;
    }
  }
  auto layers = net.bind_constant(tape);
  ad::Var f = net.forward(tape, layers, tape.constant(x), tape.constant(z), lora);
  return ad::add(tape.constant(std::move(skip_z)), ad::mul(tape.constant(std::move(c_out)), f));
}

ad::Var ConsistencyStudent::f_theta(ad::Tape& tape, const nn::LoraBinding& lora, const Array& z,
                                    const Array& embeddings, std::span<const double> omega,
                                    std::span<const double> t) const {
  return assemble(tape, base_, &lora, z, embeddings, omega, t);
}

Array ConsistencyStudent::f_theta(const nn::LoraAdapter& adapter, const Array& z,
                                  const Array& embeddings, std::span<const double> omega,
                                  std::span<const double> t) const {
  ad::Tape tape;
  const auto lora = nn::bind_lora(tape, adapter, false);
  return assemble(tape, base_, &lora, z, embeddings, omega, t).value();
}

Array ConsistencyStudent::f_theta_merged(const nn::GatedMlp& merged, const Array& z,
                                         const Array& embeddings, std::span<const double> omega,
                                         std::span<const double> t) const {
  ad::Tape tape;
  return assemble(tape, merged, nullptr, z, embeddings, omega, t).value();
}

void ema_update(nn::LoraAdapter& target, const nn::LoraAdapter& online, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("EMA rate must lie in [0, 1]");
  auto dst = target.tensors();
  auto src = online.tensors();
  if (dst.size() != src.size()) throw ShapeError("EMA: adapters differ in layer count");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->shape() != src[i]->shape()) throw ShapeError("EMA: factor shapes differ");
    auto d = dst[i]->values();
    auto s = src[i]->values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = rate * d[j] + (1.0 - rate) * s[j];
  }
}

double adapter_distance(const nn::LoraAdapter& a, const nn::LoraAdapter& b) {
  auto x = a.tensors();
  auto y = b.tensors();
  if (x.size() != y.size()) throw ShapeError("adapters differ in layer count");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]->size() != y[i]->size()) throw ShapeError("adapter factor shapes differ");
    for (std::size_t j = 0; j < x[i]->size(); ++j) {
      const double d = (*x[i])[j] - (*y[i])[j];
      acc += d * d;
    }
  }
  return acc;
}

std::vector<double> consistency_times(const NoiseSchedule& schedule, std::size_t steps) {
  if (steps < 1) throw DomainError("consistency sampling needs steps >= 1");
  if (steps == 1) return {schedule.horizon()};
  auto grid = uniform_times(schedule.horizon(), schedule.epsilon(), steps + 1);
  grid.pop_back();
  return grid;
}

Array consistency_sample_batch(const ConsistencyStudent& student, const nn::LoraAdapter& adapter,
                               const Array& embeddings, double omega, std::size_t steps,
                               std::span<const std::uint64_t> seeds) {
  const auto& sched = student.schedule();
  const LatentShape shape = student.config().latent;
  const std::size_t k = shape.flat();
  const std::size_t b = seeds.size();
  const auto times = consistency_times(sched, steps);
  Array z({b, k});
  for (std::size_t r = 0; r < b; ++r) {
    const Array start = sample_start(sched, shape, seeds[r]);
    std::copy_n(start.values().data(), k, z.values().data() + r * k);
  }
  const std::vector<double> w(b, omega);
  Array x0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::vector<double> t(b, times[i]);
    x0 = student.f_theta(adapter, z, embeddings, w, t);
    if (i + 1 == times.size()) break;
    const auto [alpha, beta] = sched.alpha_beta(times[i + 1]);
    for (std::size_t r = 0; r < b; ++r) {
      StreamRng rng(seeds[r], Stream::sample, i + 1);
      for (std::size_t j = r * k; j < (r + 1) * k; ++j) z[j] = alpha * x0[j] + beta * rng.normal();
    }
  }
  return x0;
}

LatentSequence consistency_sample(const ConsistencyStudent& student, const Array& embedding,
                                  double omega, std::size_t steps, std::uint64_t seed) {
  const std::uint64_t s[1] = {seed};
  const Array e = embedding.reshaped({1, embedding.size()});
  return LatentSequence::from_batch(
      consistency_sample_batch(student, student.online(), e, omega, steps, s), 0,
      student.config().latent);
}

}  // namespace rgcd
