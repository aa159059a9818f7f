#include "rgcd/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/optim.hpp"
#include "rgcd/rng.hpp"

namespace rgcd {

namespace {

void check_time(const NoiseSchedule& s, double t) {
  if (!(t >= s.epsilon() && t <= s.horizon())) {
    throw DomainError("teacher time " + std::to_string(t) + " outside [eps, T]");
  }
}

}  // namespace

Teacher::Teacher(NoiseSchedule schedule, PromptLibrary library)
    : schedule_(std::move(schedule)), library_(std::move(library)) {}

void Teacher::check_batch(const Array& z, std::size_t classes, std::size_t times) const {
  const std::size_t k = library_.latent().flat();
  if (z.rank() != 2 || z.cols() != k) {
    throw ShapeError("teacher input " + ad::shape_string(z.shape()) + " is not [B, " +
                     std::to_string(k) + "]");
  }
  if (classes != z.rows() || times != z.rows()) {
    throw ShapeError("teacher batch needs one class and one time per row");
  }
}

// ---------------------------------------------------------------- analytic

void AnalyticTeacher::mixture_weights(std::span<const double> z, double alpha, double v,
                                      std::vector<double>& w) const {
  const std::size_t n = library_.classes();
  w.assign(n, 0.0);
  double top = -INFINITY;
  for (std::size_t c = 0; c < n; ++c) {
    const auto& m = library_.mean(c);
    double d2 = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double r = z[j] - alpha * m[j];
      d2 += r * r;
    }
    w[c] = -d2 / (2.0 * v);
    top = std::max(top, w[c]);
  }
  double total = 0.0;
  for (auto& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (auto& x : w) x /= total;
}

Array AnalyticTeacher::epsilon(const Array& z, std::span<const std::size_t> classes,
                               std::span<const double> t) const {
  check_batch(z, classes.size(), t.size());
  const std::size_t k = z.cols();
  const double s2 = library_.spread() * library_.spread();
  Array out(z.shape());
  std::vector<double> w;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    check_time(schedule_, t[r]);
    const auto [alpha, beta] = schedule_.alpha_beta(t[r]);
    const double v = alpha * alpha * s2 + beta * beta;
    std::span<const double> zr = z.values().subspan(r * k, k);
    // (z - alpha E[z0|z]) / beta reduces to beta (z - alpha m) / v per class.
    if (classes[r] == kUnconditional) {
      mixture_weights(zr, alpha, v, w);
      for (std::size_t c = 0; c < w.size(); ++c) {
        const auto& m = library_.mean(c);
        for (std::size_t j = 0; j < k; ++j) {
          out[r * k + j] += w[c] * beta * (zr[j] - alpha * m[j]) / v;
        }
      }
    } else {
      const auto& m = library_.mean(classes[r]);
      for (std::size_t j = 0; j < k; ++j) out[r * k + j] = beta * (zr[j] - alpha * m[j]) / v;
    }
  }
  return out;
}

std::vector<double> AnalyticTeacher::posterior_mean(std::span<const double> z, std::size_t cls,
                                                    double t) const {
  check_time(schedule_, t);
  const std::size_t k = library_.latent().flat();
  if (z.size() != k) throw ShapeError("posterior_mean: latent width mismatch");
  const auto [alpha, beta] = schedule_.alpha_beta(t);
  const double s2 = library_.spread() * library_.spread();
  const double v = alpha * alpha * s2 + beta * beta;
  const double gain = alpha * s2 / v;
  std::vector<double> out(k, 0.0);
  auto add_class = [&](std::size_t c, double weight) {
    const auto& m = library_.mean(c);
    for (std::size_t j = 0; j < k; ++j) out[j] += weight * (m[j] + gain * (z[j] - alpha * m[j]));
  };
  if (cls == kUnconditional) {
    std::vector<double> w;
    mixture_weights(z, alpha, v, w);
    for (std::size_t c = 0; c < w.size(); ++c) add_class(c, w[c]);
  } else {
    add_class(cls, 1.0);
  }
  return out;
}

double AnalyticTeacher::log_density(std::span<const double> z, std::size_t cls, double t) const {
  check_time(schedule_, t);
  const std::size_t k = library_.latent().flat();
  if (z.size() != k) throw ShapeError("log_density: latent width mismatch");
  const auto [alpha, beta] = schedule_.alpha_beta(t);
  const double s2 = library_.spread() * library_.spread();
  const double v = alpha * alpha * s2 + beta * beta;
  const double norm = -0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi * v);
  auto log_gauss = [&](std::size_t c) {
    const auto& m = library_.mean(c);
    double d2 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double r = z[j] - alpha * m[j];
      d2 += r * r;
    }
    return norm - d2 / (2.0 * v);
  };
  if (cls != kUnconditional) return log_gauss(cls);
  const std::size_t n = library_.classes();
  std::vector<double> terms(n);
  double top = -INFINITY;
  for (std::size_t c = 0; c < n; ++c) {
    terms[c] = log_gauss(c);
    top = std::max(top, terms[c]);
  }
  double acc = 0.0;
  for (double x : terms) acc += std::exp(x - top);
  return top + std::log(acc / static_cast<double>(n));
}

// ---------------------------------------------------------------- neural

NeuralTeacher::NeuralTeacher(NoiseSchedule schedule, PromptLibrary library, nn::GatedMlp net)
    : Teacher(std::move(schedule), std::move(library)), net_(std::move(net)) {
  if (net_.shape().input != input_width() || net_.shape().output != library_.latent().flat()) {
    throw ShapeError("neural teacher network does not match the latent and embedding widths");
  }
}

std::size_t NeuralTeacher::input_width() const {
  return library_.latent().flat() + library_.embed_dim() + nn::kTimeFeatures;
}

Array NeuralTeacher::assemble_inputs(const Array& z, std::span<const std::size_t> classes,
                                     std::span<const double> t) const {
  check_batch(z, classes.size(), t.size());
  const std::size_t k = z.cols();
  const std::size_t dc = library_.embed_dim();
  const std::size_t width = k + dc + nn::kTimeFeatures;
  Array x({z.rows(), width});
  for (std::size_t r = 0; r < z.rows(); ++r) {
    check_time(schedule_, t[r]);
    double* row = x.values().data() + r * width;
    std::copy_n(z.values().data() + r * k, k, row);
    const auto& e = library_.embedding(classes[r]);
    std::copy_n(e.values().data(), dc, row + k);
    nn::time_features(t[r], schedule_.epsilon(), schedule_.horizon(),
                      std::span<double>(row + k + dc, nn::kTimeFeatures));
  }
  return x;
}

Array NeuralTeacher::epsilon(const Array& z, std::span<const std::size_t> classes,
                             std::span<const double> t) const {
  ad::Tape tape;
  auto layers = net_.bind_constant(tape);
  ad::Var x = tape.constant(assemble_inputs(z, classes, t));
  ad::Var gate = tape.constant(z);
  return net_.forward(tape, layers, x, gate).value();
}

NeuralTeacher NeuralTeacher::untrained(NoiseSchedule schedule, PromptLibrary library,
                                       const NeuralTeacherParams& params) {
  const std::size_t k = library.latent().flat();
  const nn::MlpShape shape{k + library.embed_dim() + nn::kTimeFeatures, params.hidden, k};
  StreamRng rng(params.seed, Stream::init, 0, 1);
  auto net = nn::GatedMlp::init(shape, rng, 0.1);
  return NeuralTeacher(std::move(schedule), std::move(library), std::move(net));
}

NeuralTeacher NeuralTeacher::train(NoiseSchedule schedule, PromptLibrary library,
                                   const NeuralTeacherParams& params) {
  NeuralTeacher teacher = untrained(std::move(schedule), std::move(library), params);
  const PromptLibrary& lib = teacher.library_;
  const NoiseSchedule& sched = teacher.schedule_;
  const std::size_t k = lib.latent().flat();
  std::vector<nn::Dense> layers = teacher.net_.layers();
  std::vector<Array*> tensors;
  for (auto& d : layers) {
    tensors.push_back(&d.weight);
    tensors.push_back(&d.bias);
  }
  Optimizer opt(OptimizerParams{OptimizerKind::adam, params.learning_rate}, tensors);

  std::vector<std::size_t> classes(params.batch);
  std::vector<double> times(params.batch);
  for (std::size_t step = 0; step < params.steps; ++step) {
    StreamRng rng(params.seed, Stream::teacher_train, step);
    Array zt({params.batch, k});
    Array noise({params.batch, k});
    for (std::size_t r = 0; r < params.batch; ++r) {
      const std::size_t c = rng.index(0, lib.classes() - 1);
      times[r] = rng.uniform(sched.epsilon(), sched.horizon());
      const auto [alpha, beta] = sched.alpha_beta(times[r]);
      const auto& m = lib.mean(c);
      for (std::size_t j = 0; j < k; ++j) {
        const double z0 = m[j] + lib.spread() * rng.normal();
        const double n = rng.normal();
        noise[r * k + j] = n;
        zt[r * k + j] = alpha * z0 + beta * n;
      }
      classes[r] = rng.uniform() < params.null_rate ? kUnconditional : c;
    }

    ad::Tape tape;
    std::vector<ad::Var> vars;
    auto bound = teacher.net_.bind_trainable(tape, vars);
    ad::Var x = tape.constant(teacher.assemble_inputs(zt, classes, times));
    ad::Var pred = teacher.net_.forward(tape, bound, x, tape.constant(zt));
    ad::Var loss = ad::mean(ad::square(ad::sub(pred, tape.constant(noise))));
    tape.backward(loss);
    std::vector<Array> grads;
    for (auto v : vars) grads.push_back(tape.grad(v));
    opt.step(tensors, grads);
    teacher.net_.set_layers(layers);
  }
  return teacher;
}

// ---------------------------------------------------------------- solvers

Array cfg_combine(const Array& cond, const Array& uncond, double omega) {
  if (cond.shape() != uncond.shape()) {
    throw ShapeError("cfg_combine: " + ad::shape_string(cond.shape()) + " vs " +
                     ad::shape_string(uncond.shape()));
  }
  Array out(cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + omega) * cond[i] - omega * uncond[i];
  return out;
}

Array cfg_combine(const Array& cond, const Array& uncond, std::span<const double> omega) {
  if (cond.shape() != uncond.shape() || omega.size() != cond.rows()) {
    throw ShapeError("cfg_combine: shapes or per-row scales disagree");
  }
  Array out(cond.shape());
  const std::size_t k = cond.cols();
  for (std::size_t r = 0; r < cond.rows(); ++r) {
    const double w = omega[r];
    for (std::size_t j = r * k; j < (r + 1) * k; ++j) out[j] = (1.0 + w) * cond[j] - w * uncond[j];
  }
  return out;
}

Array ddim_delta(const NoiseSchedule& schedule, const Array& z_hi, const Array& eps_hat,
                 std::span<const double> t_hi, std::span<const double> t_lo) {
  if (z_hi.shape() != eps_hat.shape() || z_hi.rank() != 2 || t_hi.size() != z_hi.rows() ||
      t_lo.size() != z_hi.rows()) {
    throw ShapeError("ddim_delta: batch shapes disagree");
  }
  const std::size_t k = z_hi.cols();
  Array out(z_hi.shape());
  for (std::size_t r = 0; r < z_hi.rows(); ++r) {
    check_time(schedule, t_lo[r]);
    check_time(schedule, t_hi[r]);
    if (t_lo[r] > t_hi[r]) {
      throw DomainError("DDIM step needs t_lo <= t_hi, got " + std::to_string(t_lo[r]) + " > " +
                        std::to_string(t_hi[r]));
    }
    const auto [a_hi, b_hi] = schedule.alpha_beta(t_hi[r]);
    const auto [a_lo, b_lo] = schedule.alpha_beta(t_lo[r]);
    const double ratio = a_lo / a_hi;
    const double coef = b_lo * ((b_hi * a_lo) / (a_hi * b_lo) - 1.0);
    for (std::size_t j = r * k; j < (r + 1) * k; ++j) {
      out[j] = ratio * z_hi[j] - coef * eps_hat[j] - z_hi[j];
    }
  }
  return out;
}

Array ddim_psi(const Teacher& teacher, const Array& z_hi, std::span<const double> t_hi,
               std::span<const double> t_lo, std::span<const std::size_t> classes) {
  return ddim_delta(teacher.schedule(), z_hi, teacher.epsilon(z_hi, classes, t_hi), t_hi, t_lo);
}

Array augmented_solver_step(const Teacher& teacher, const Array& z_hi, std::span<const double> t_hi,
                            std::span<const double> t_lo, std::span<const std::size_t> classes,
                            std::span<const double> omega) {
  if (omega.size() != z_hi.rows()) throw ShapeError("one guidance scale per row required");
  for (double w : omega) {
    if (!(w >= 0.0)) throw DomainError("guidance scale must be >= 0");
  }
  const Array psi_c = ddim_psi(teacher, z_hi, t_hi, t_lo, classes);
  const std::vector<std::size_t> null(z_hi.rows(), kUnconditional);
  const Array psi_u = ddim_psi(teacher, z_hi, t_hi, t_lo, null);
  const std::size_t k = z_hi.cols();
  Array out(z_hi.shape());
  for (std::size_t r = 0; r < z_hi.rows(); ++r) {
    const double w = omega[r];
    for (std::size_t j = r * k; j < (r + 1) * k; ++j) {
      out[j] = z_hi[j] + (1.0 + w) * psi_c[j] - w * psi_u[j];
    }
  }
  return out;
}

Array guided_epsilon(const Teacher& teacher, const Array& z, std::span<const std::size_t> classes,
                     std::span<const double> t, std::span<const double> omega) {
  const Array cond = teacher.epsilon(z, classes, t);
  if (std::all_of(omega.begin(), omega.end(), [](double w) { return w == 0.0; })) return cond;
  const std::vector<std::size_t> null(z.rows(), kUnconditional);
  return cfg_combine(cond, teacher.epsilon(z, null, t), omega);
}

Array ddim_step(const Teacher& teacher, const Array& z, double t_hi, double t_lo,
                std::span<const std::size_t> classes, std::span<const double> omega) {
  const std::vector<double> hi(z.rows(), t_hi);
  const std::vector<double> lo(z.rows(), t_lo);
  const Array eps = guided_epsilon(teacher, z, classes, hi, omega);
  Array out = ddim_delta(teacher.schedule(), z, eps, hi, lo);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  return out;
}

Array sample_start(const NoiseSchedule& schedule, LatentShape shape, std::uint64_t seed) {
  StreamRng rng(seed, Stream::sample, 0);
  const double beta_t = schedule.alpha_beta(schedule.horizon()).beta;
  return rng.normal_array({1, shape.flat()}, beta_t);
}

Array ddim_sample_batch(const Teacher& teacher, std::span<const std::size_t> classes, double omega,
                        std::size_t steps, std::span<const std::uint64_t> seeds) {
  if (steps < 1) throw DomainError("ddim_sample needs steps >= 1");
  if (classes.size() != seeds.size()) throw ShapeError("one class per seed required");
  const auto& sched = teacher.schedule();
  const LatentShape shape = teacher.library().latent();
  const std::size_t k = shape.flat();
  Array z({seeds.size(), k});
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    const Array start = sample_start(sched, shape, seeds[r]);
    std::copy_n(start.values().data(), k, z.values().data() + r * k);
  }
  const auto times = uniform_times(sched.epsilon(), sched.horizon(), steps + 1);
  const std::vector<double> w(seeds.size(), omega);
  for (std::size_t i = steps; i > 0; --i) z = ddim_step(teacher, z, times[i], times[i - 1], classes, w);
  return z;
}

LatentSequence ddim_sample(const Teacher& teacher, std::size_t cls, double omega, std::size_t steps,
                           std::uint64_t seed) {
  const std::size_t c[1] = {cls};
  const std::uint64_t s[1] = {seed};
  return LatentSequence::from_batch(ddim_sample_batch(teacher, c, omega, steps, s), 0,
                                    teacher.library().latent());
}

Array integrate_pfode(const Teacher& teacher, const Array& z, double t_from, double t_to,
                      std::span<const std::size_t> classes, std::span<const double> omega,
                      std::size_t substeps) {
  if (substeps < 1) throw DomainError("RK4 needs at least one substep");
  const auto& sched = teacher.schedule();
  auto field = [&](const Array& y, double t) {
    const std::vector<double> times(y.rows(), t);
    const Array eps = guided_epsilon(teacher, y, classes, times, omega);
    const auto dd = sched.drift_diffusion(t);
    const double beta = sched.alpha_beta(t).beta;
    Array out(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      out[i] = dd.drift * y[i] + 0.5 * dd.diffusion_sq * eps[i] / beta;
    }
    return out;
  };
  auto axpy = [](const Array& y, const Array& d, double h) {
    Array out = y;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * d[i];
    return out;
  };
  const double h = (t_to - t_from) / static_cast<double>(substeps);
  Array y = z;
  for (std::size_t i = 0; i < substeps; ++i) {
    const double t = t_from + static_cast<double>(i) * h;
    const double t_next = i + 1 == substeps ? t_to : t + h;
    const double t_mid = t + 0.5 * h;
    const Array k1 = field(y, t);
    const Array k2 = field(axpy(y, k1, 0.5 * h), t_mid);
    const Array k3 = field(axpy(y, k2, 0.5 * h), t_mid);
    const Array k4 = field(axpy(y, k3, h), t_next);
    for (std::size_t j = 0; j < y.size(); ++j) {
      y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
  }
  return y;
}

}  // namespace rgcd
