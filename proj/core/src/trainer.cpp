#include "rgcd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/checkpoint.hpp"
#include "rgcd/rng.hpp"

namespace rgcd {

DistanceKind parse_distance(const std::string& name) {
  if (name == "pseudo_huber") return DistanceKind::pseudo_huber;
  if (name == "l2_squared") return DistanceKind::l2_squared;
  throw DomainError("unknown distance '" + name + "' (expected pseudo_huber or l2_squared)");
}

TrainConfig train_config_from(const RunConfig& c) {
  TrainConfig t;
  t.skip = c.train.skip;
  t.guidance = {c.train.omega_min, c.train.omega_max};
  t.ema_rate = c.train.ema_rate;
  t.steps = c.train.steps;
  t.batch = c.train.batch;
  t.distance = parse_distance(c.train.distance);
  t.huber_c = c.train.huber_scale * std::sqrt(static_cast<double>(c.data.frames * c.data.dim));
  t.optimizer = {parse_optimizer(c.train.optimizer), c.train.learning_rate, c.train.adam_beta1,
                 c.train.adam_beta2, c.train.adam_eps};
  t.seed = c.seed;
  t.checkpoint_every = c.train.checkpoint_every;
  t.probe_every = c.train.probe_every;
  return t;
}

TrainingHalted::TrainingHalted(std::size_t step, const std::string& what)
    : NumericError("training halted at step " + std::to_string(step) + ": " + what), step_(step) {}

CdPoints cd_points(const Teacher& teacher, const TimeGrid& grid, const Array& z0,
                   const Array& noise, std::span<const std::size_t> classes,
                   std::span<const double> omega, std::span<const std::size_t> n, std::size_t k) {
  if (z0.shape() != noise.shape() || z0.rank() != 2) throw ShapeError("cd_points: z0 and noise differ");
  const std::size_t b = z0.rows();
  const std::size_t kk = z0.cols();
  if (n.size() != b) throw ShapeError("one grid index per row required");
  CdPoints p{Array(z0.shape()), Array(), std::vector<double>(b), std::vector<double>(b)};
  for (std::size_t r = 0; r < b; ++r) {
    if (n[r] < 1 || n[r] + k > grid.size()) {
      throw DomainError("grid index n = " + std::to_string(n[r]) + " outside [1, N - k] = [1, " +
                        std::to_string(grid.size() >= k ? grid.size() - k : 0) + "]");
    }
    p.t_lo[r] = grid.at(n[r]);
    p.t_hi[r] = grid.at(n[r] + k);
    const auto [alpha, beta] = teacher.schedule().alpha_beta(p.t_hi[r]);
    for (std::size_t j = r * kk; j < (r + 1) * kk; ++j) p.z_hi[j] = alpha * z0[j] + beta * noise[j];
  }
  p.z_lo = augmented_solver_step(teacher, p.z_hi, p.t_hi, p.t_lo, classes, omega);
  return p;
}

ad::Var consistency_distance(ad::Tape& tape, ad::Var a, const Array& b, DistanceKind kind,
                             double huber_c) {
  if (a.value().shape() != b.shape()) {
    throw ShapeError("distance: " + ad::shape_string(a.value().shape()) + " vs " +
                     ad::shape_string(b.shape()));
  }
  ad::Var sq = ad::row_sum(ad::square(ad::sub(a, tape.constant(b))));
  if (kind == DistanceKind::l2_squared) return ad::mean(sq);
  if (!(huber_c > 0.0)) throw DomainError("pseudo-Huber constant must be > 0");
  return ad::shift(ad::mean(ad::sqrt_shifted(sq, huber_c * huber_c)), -huber_c);
}

CdOutput cd_loss(ad::Tape& tape, const ConsistencyStudent& student, const nn::LoraBinding& online,
                 const Teacher& teacher, const TimeGrid& grid, const Array& z0,
                 const Array& embeddings, std::span<const std::size_t> classes,
                 std::span<const double> omega, std::span<const std::size_t> n, std::size_t k,
                 const Array& noise, DistanceKind kind, double huber_c) {
  const CdPoints p = cd_points(teacher, grid, z0, noise, classes, omega, n, k);
  ad::Var f_online = student.f_theta(tape, online, p.z_hi, embeddings, omega, p.t_hi);
  // The target branch is evaluated off-tape, so no gradient can reach it.
  const Array f_target = student.f_theta(student.target(), p.z_lo, embeddings, omega, p.t_lo);
  return {consistency_distance(tape, f_online, f_target, kind, huber_c), f_online};
}

ad::Var total_loss(ad::Var cd, ad::Var j_img, ad::Var j_vid, const RewardWeights& weights) {
  return ad::sub(ad::sub(cd, ad::scale(j_img, weights.beta_img)), ad::scale(j_vid, weights.beta_vid));
}

std::shared_ptr<const Teacher> make_teacher(const RunConfig& config, const SyntheticDataset& data) {
  NoiseSchedule schedule = make_schedule(config);
  if (config.teacher.kind == "neural") {
    NeuralTeacherParams p;
    p.hidden = config.teacher.hidden;
    p.steps = config.teacher.steps;
    p.batch = config.teacher.batch;
    p.learning_rate = config.teacher.learning_rate;
    p.seed = config.seed;
    return std::make_shared<NeuralTeacher>(NeuralTeacher::train(schedule, data.library(), p));
  }
  return std::make_shared<AnalyticTeacher>(schedule, data.library());
}

RunContext make_context(const RunConfig& config) {
  if (auto bad = validate(config); !bad.empty()) throw ConfigError(std::move(bad));
  SyntheticDataset data = generate_dataset(config, config.seed);
  auto teacher = make_teacher(config, data);
  TimeGrid grid = make_schedule(config).discretize(config.train.skip);
  return RunContext{config, std::move(data), std::move(teacher), std::move(grid)};
}

namespace {

StudentConfig student_config(const RunConfig& c) {
  StudentConfig s;
  s.latent = {c.data.frames, c.data.dim};
  s.embed_dim = c.data.embed_dim;
  s.hidden = c.student.hidden;
  s.lora_rank = c.student.lora_rank;
  s.lora_scale = c.student.lora_scale;
  s.head_scale = c.student.head_scale;
  s.sigma_data = c.student.sigma_data;
  s.input_scale = c.student.input_scale;
  s.guidance = {c.train.omega_min, c.train.omega_max};
  return s;
}

}  // namespace

TrainerState init_state(const RunContext& ctx) {
  const auto sc = student_config(ctx.config);
  const auto* neural = dynamic_cast<const NeuralTeacher*>(ctx.teacher.get());
  ConsistencyStudent student = neural ? ConsistencyStudent::from_teacher(sc, *neural, ctx.config.seed)
                                      : ConsistencyStudent::init(sc, make_schedule(ctx.config), ctx.config.seed);
  const TrainConfig tc = train_config_from(ctx.config);
  auto tensors = student.online().tensors();
  Optimizer opt(tc.optimizer, tensors);
  return TrainerState{ctx.config, tc, std::move(student), std::move(opt), 0, {}, {}};
}

LossReport train_step(TrainerState& state, const RunContext& ctx) {
  const TrainConfig& tc = state.train;
  const auto& data = ctx.dataset;
  const auto& suite = data.rewards();
  const std::size_t b = tc.batch;
  const std::size_t k = suite.latent.flat();
  const std::size_t step = state.step;

  Array z0({b, k});
  Array emb({b, data.library().embed_dim()});
  std::vector<std::size_t> classes(b), n(b);
  std::vector<double> omega(b);
  for (std::size_t r = 0; r < b; ++r) {
    const Example ex = data.example(static_cast<std::uint64_t>(step) * b + r);
    std::copy_n(ex.z0.values().data(), k, z0.values().data() + r * k);
    const Array& e = data.train_prompts()[ex.prompt].embedding;
    std::copy_n(e.values().data(), e.size(), emb.values().data() + r * e.size());
    classes[r] = ex.cls;
  }
  StreamRng idx_rng(tc.seed, Stream::timestep, step);
  for (auto& v : n) v = idx_rng.index(1, ctx.grid.size() - tc.skip);
  StreamRng w_rng(tc.seed, Stream::guidance, step);
  for (auto& w : omega) w = w_rng.uniform(tc.guidance.min, tc.guidance.max);
  StreamRng noise_rng(tc.seed, Stream::diffusion_noise, step);
  const Array noise = noise_rng.normal_array({b, k});
  StreamRng frame_rng(tc.seed, Stream::frames, step);
  const std::size_t m = suite.weights.frames_sampled;
  const auto frames = sample_frames(frame_rng, b, suite.latent.frames, m);

  LossReport report;
  report.step = step;
  std::vector<Array> grads;
  try {
    ad::Tape tape;
    std::vector<ad::Var> params;
    const auto lora = nn::bind_lora(tape, state.student.online(), true, &params);
    const CdOutput cd = cd_loss(tape, state.student, lora, *ctx.teacher, ctx.grid, z0, emb, classes,
                                omega, n, tc.skip, noise, tc.distance, tc.huber_c);
    ad::Var ji = j_img(tape, suite, cd.online, classes, frames, m);
    ad::Var jv = j_vid(tape, suite, cd.online, classes);
    ad::Var total = total_loss(cd.loss, ji, jv, suite.weights);
    tape.backward(total);
    report.l_cd = cd.loss.value().item();
    report.j_img = ji.value().item();
    report.j_vid = jv.value().item();
    report.total = total.value().item();
    double g2 = 0.0;
    for (auto v : params) {
      grads.push_back(tape.grad(v));
      for (double g : grads.back().values()) g2 += g * g;
    }
    report.grad_norm = std::sqrt(g2);
    if (!std::isfinite(report.grad_norm)) throw NumericError("non-finite gradient");
  } catch (const TrainingHalted&) {
    throw;
  } catch (const NumericError& e) {
    throw TrainingHalted(step, e.what());
  }

  auto tensors = state.student.online().tensors();
  state.optimizer.step(tensors, grads);
  ema_update(state.student.target(), state.student.online(), tc.ema_rate);
  ++state.step;
  state.history.push_back(report);
  return report;
}

ProbeSet make_probe_set(const RunContext& ctx, std::size_t trajectories, std::size_t points) {
  const auto& data = ctx.dataset;
  const auto& sched = ctx.teacher->schedule();
  const LatentShape shape = data.library().latent();
  const std::size_t k = shape.flat();
  ProbeSet ps;
  ps.omega = ctx.config.eval.omega;
  ps.times = uniform_times(sched.epsilon(), sched.horizon(), points);
  ps.embeddings = Array({trajectories, data.library().embed_dim()});
  Array z({trajectories, k});
  const auto& prompts = data.heldout_prompts();
  for (std::size_t i = 0; i < trajectories; ++i) {
    const Prompt& p = prompts[i % prompts.size()];
    ps.classes.push_back(p.cls);
    std::copy_n(p.embedding.values().data(), p.embedding.size(),
                ps.embeddings.values().data() + i * p.embedding.size());
    const Array start = sample_start(sched, shape, stream_key(ctx.config.seed, Stream::probe, i));
    std::copy_n(start.values().data(), k, z.values().data() + i * k);
  }
  const std::vector<double> w(trajectories, ps.omega);
  std::vector<Array> desc{z};
  for (std::size_t i = points - 1; i > 0; --i) {
    z = integrate_pfode(*ctx.teacher, z, ps.times[i], ps.times[i - 1], ps.classes, w, 200);
    desc.push_back(z);
  }
  ps.points.assign(desc.rbegin(), desc.rend());
  return ps;
}

double self_consistency(const ConsistencyStudent& student, const nn::LoraAdapter& adapter,
                        const ProbeSet& ps) {
  const std::size_t p = ps.classes.size();
  const std::vector<double> w(p, ps.omega);
  std::vector<Array> f;
  for (std::size_t i = 0; i < ps.times.size(); ++i) {
    const std::vector<double> t(p, ps.times[i]);
    f.push_back(student.f_theta(adapter, ps.points[i], ps.embeddings, w, t));
  }
  const std::size_t k = f.front().cols();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < f.size(); ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      double d2 = 0.0;
      for (std::size_t j = r * k; j < (r + 1) * k; ++j) {
        const double d = f[i][j] - f[i + 1][j];
        d2 += d * d;
      }
      acc += std::sqrt(d2);
    }
  }
  return acc / static_cast<double>(p * (f.size() - 1));
}

HeldoutRewards heldout_rewards(const RunContext& ctx, const ConsistencyStudent& student,
                               std::size_t steps, const RewardWeights& weights) {
  const auto& data = ctx.dataset;
  const auto& ev = ctx.config.eval;
  const std::size_t dc = data.library().embed_dim();
  const std::size_t rows = ev.prompts * ev.samples_per_prompt;
  Array emb({rows, dc});
  std::vector<std::size_t> classes;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < ev.prompts; ++i) {
    const Prompt& p = data.heldout_prompts()[i];
    for (std::size_t s = 0; s < ev.samples_per_prompt; ++s) {
      std::copy_n(p.embedding.values().data(), dc, emb.values().data() + classes.size() * dc);
      classes.push_back(p.cls);
      seeds.push_back(stream_key(ctx.config.seed, Stream::eval, p.id, s));
    }
  }
  const Array x = consistency_sample_batch(student, student.online(), emb, ev.omega, steps, seeds);
  const auto fr = frame_metric(data.rewards(), x, classes);
  const auto sq = sequence_metric(data.rewards(), x, classes);
  HeldoutRewards out;
  for (std::size_t i = 0; i < rows; ++i) {
    out.frame += fr[i] / static_cast<double>(rows);
    out.sequence += sq[i] / static_cast<double>(rows);
  }
  out.combined = weights.beta_img * out.frame + weights.beta_vid * out.sequence;
  return out;
}

ProbeRecord probe(const TrainerState& state, const RunContext& ctx, const ProbeSet& probes) {
  ProbeRecord r;
  r.step = state.step;
  r.self_consistency = self_consistency(state.student, state.student.online(), probes);
  const auto h = heldout_rewards(ctx, state.student, ctx.config.eval.student_steps,
                                 ctx.dataset.rewards().weights);
  r.heldout_frame = h.frame;
  r.heldout_sequence = h.sequence;
  r.ema_gap = std::sqrt(adapter_distance(state.student.target(), state.student.online()));
  return r;
}

// ---------------------------------------------------------------- persistence

namespace {

void add_adapter(CheckpointFile& f, const std::string& prefix, const nn::LoraAdapter& a) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    f.blobs.push_back({prefix + ".L" + std::to_string(l) + ".down", a.layers[l].down});
    f.blobs.push_back({prefix + ".L" + std::to_string(l) + ".up", a.layers[l].up});
  }
}

void read_adapter(const CheckpointFile& f, const std::string& prefix, nn::LoraAdapter& a) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& down = f.get(prefix + ".L" + std::to_string(l) + ".down");
    const auto& up = f.get(prefix + ".L" + std::to_string(l) + ".up");
    if (down.shape() != a.layers[l].down.shape() || up.shape() != a.layers[l].up.shape()) {
      throw FormatError("checkpoint adapter '" + prefix + "' has unexpected shapes");
    }
    a.layers[l].down = down;
    a.layers[l].up = up;
  }
}

}  // namespace

CheckpointFile to_checkpoint(const TrainerState& s) {
  CheckpointFile f;
  f.config_text = serialize_config(s.config);
  f.step = s.step;
  const auto& layers = s.student.base().layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    f.blobs.push_back({"base.L" + std::to_string(l) + ".weight", layers[l].weight});
    f.blobs.push_back({"base.L" + std::to_string(l) + ".bias", layers[l].bias});
  }
  add_adapter(f, "online", s.student.online());
  add_adapter(f, "target", s.student.target());
  for (std::size_t i = 0; i < s.optimizer.first_moments().size(); ++i) {
    f.blobs.push_back({"optim.m" + std::to_string(i), s.optimizer.first_moments()[i]});
    f.blobs.push_back({"optim.v" + std::to_string(i), s.optimizer.second_moments()[i]});
  }
  f.blobs.push_back({"optim.steps", Array::scalar(static_cast<double>(s.optimizer.steps()))});
  if (!s.history.empty()) {
    Array h({s.history.size(), 6});
    for (std::size_t i = 0; i < s.history.size(); ++i) {
      const auto& r = s.history[i];
      const double row[6] = {static_cast<double>(r.step), r.l_cd, r.j_img, r.j_vid, r.total, r.grad_norm};
      std::copy_n(row, 6, h.values().data() + i * 6);
    }
    f.blobs.push_back({"history", std::move(h)});
  }
  if (!s.probes.empty()) {
    Array p({s.probes.size(), 5});
    for (std::size_t i = 0; i < s.probes.size(); ++i) {
      const auto& r = s.probes[i];
      const double row[5] = {static_cast<double>(r.step), r.self_consistency, r.heldout_frame,
                             r.heldout_sequence, r.ema_gap};
      std::copy_n(row, 5, p.values().data() + i * 5);
    }
    f.blobs.push_back({"probes", std::move(p)});
  }
  return f;
}

TrainerState state_from_checkpoint(const CheckpointFile& f, const RunContext& ctx) {
  if (f.config_text != serialize_config(ctx.config)) {
    throw ConfigError({"checkpoint was written with a different config"});
  }
  TrainerState s = init_state(ctx);
  std::vector<nn::Dense> layers = s.student.base().layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight = f.get("base.L" + std::to_string(l) + ".weight");
    layers[l].bias = f.get("base.L" + std::to_string(l) + ".bias");
  }
  nn::GatedMlp base(s.student.base().shape(), std::move(layers));
  nn::LoraAdapter online = s.student.online();
  nn::LoraAdapter target = s.student.target();
  read_adapter(f, "online", online);
  read_adapter(f, "target", target);
  s.student = ConsistencyStudent(s.student.config(), s.student.schedule(), std::move(base),
                                 std::move(online), std::move(target));
  for (std::size_t i = 0; i < s.optimizer.first_moments().size(); ++i) {
    s.optimizer.first_moments()[i] = f.get("optim.m" + std::to_string(i));
    s.optimizer.second_moments()[i] = f.get("optim.v" + std::to_string(i));
  }
  s.optimizer.set_steps(static_cast<std::size_t>(f.get("optim.steps").item()));
  s.step = f.step;
  if (f.has("history")) {
    const auto& h = f.get("history");
    for (std::size_t i = 0; i < h.rows(); ++i) {
      s.history.push_back({static_cast<std::size_t>(h.at(i, 0)), h.at(i, 1), h.at(i, 2), h.at(i, 3),
                           h.at(i, 4), h.at(i, 5)});
    }
  }
  if (f.has("probes")) {
    const auto& p = f.get("probes");
    for (std::size_t i = 0; i < p.rows(); ++i) {
      s.probes.push_back({static_cast<std::size_t>(p.at(i, 0)), p.at(i, 1), p.at(i, 2), p.at(i, 3),
                          p.at(i, 4)});
    }
  }
  return s;
}

std::pair<RunContext, TrainerState> load_run(const std::filesystem::path& path) {
  const CheckpointFile f = read_checkpoint(path);
  RunContext ctx = make_context(parse_config_text(f.config_text));
  TrainerState s = state_from_checkpoint(f, ctx);
  return {std::move(ctx), std::move(s)};
}

TrainerState train_run(const RunContext& ctx, const RunOptions& options) {
  TrainerState state = options.resume_from ? state_from_checkpoint(read_checkpoint(*options.resume_from), ctx)
                                           : init_state(ctx);
  const TrainConfig& tc = state.train;
  const std::size_t end = options.stop_after ? std::min(options.stop_after, tc.steps) : tc.steps;
  std::optional<ProbeSet> probes;
  if (tc.probe_every > 0) probes = make_probe_set(ctx, 16, 6);
  if (probes && state.step == 0 && state.probes.empty()) state.probes.push_back(probe(state, ctx, *probes));

  auto save = [&](const std::string& name) {
    if (!options.checkpoint_dir) return;
    try {
      std::filesystem::create_directories(*options.checkpoint_dir);
      write_checkpoint(*options.checkpoint_dir / name, to_checkpoint(state));
    } catch (const IoError& e) {
      throw IoError("step " + std::to_string(state.step) + ": " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      throw IoError("step " + std::to_string(state.step) + ": " + e.what());
    }
  };

  while (state.step < end) {
    try {
      const LossReport r = train_step(state, ctx);
      if (options.on_step) options.on_step(r);
    } catch (const TrainingHalted& e) {
      if (options.checkpoint_dir) {
        save("halt_step_" + std::to_string(e.step()) + ".rgcd");
        std::ofstream(*options.checkpoint_dir / "halt_reason.txt") << e.what() << '\n';
      }
      throw;
    }
    if (probes && state.step % tc.probe_every == 0) state.probes.push_back(probe(state, ctx, *probes));
    if (tc.checkpoint_every && state.step % tc.checkpoint_every == 0) {
      save("checkpoint_" + std::to_string(state.step) + ".rgcd");
    }
  }
  if (state.step == tc.steps) save("final.rgcd");
  return state;
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossReport>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,l_cd,j_img,j_vid,total,grad_norm\n";
  for (const auto& r : history) {
    out << r.step << ',' << fmt17(r.l_cd) << ',' << fmt17(r.j_img) << ',' << fmt17(r.j_vid) << ','
        << fmt17(r.total) << ',' << fmt17(r.grad_norm) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

void write_probe_curve(const std::filesystem::path& path, const std::vector<ProbeRecord>& probes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,self_consistency,heldout_frame,heldout_sequence,ema_gap\n";
  for (const auto& r : probes) {
    out << r.step << ',' << fmt17(r.self_consistency) << ',' << fmt17(r.heldout_frame) << ','
        << fmt17(r.heldout_sequence) << ',' << fmt17(r.ema_gap) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace rgcd
