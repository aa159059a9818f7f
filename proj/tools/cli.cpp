#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rgcd/checkpoint.hpp"
#include "rgcd/config.hpp"
#include "rgcd/error.hpp"
#include "rgcd/eval/ablation.hpp"
#include "rgcd/eval/benchmark.hpp"
#include "rgcd/eval/leaderboard.hpp"
#include "rgcd/gradcheck.hpp"
#include "rgcd/trainer.hpp"

namespace rgcd::cli {

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
  app->add_option("-c,--config", args.path, "Config file (key = value lines)");
  app->add_option("-s,--set", args.overrides, "Override one key, e.g. --set train.steps=500")
      ->take_all();
}

RunConfig load_config(const ConfigArgs& args) {
  RunConfig cfg = args.path.empty() ? RunConfig{} : parse_config(args.path);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (auto bad = validate(cfg); !bad.empty()) throw ConfigError(std::move(bad));
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// A sampler plus the run it came from. `which` is teacher, untrained, or a
// checkpoint path.
struct Model {
  std::string label;
  std::shared_ptr<RunContext> ctx;
  eval::Sampler sampler;
};

Model load_model(const std::string& which, const RunConfig& cfg) {
  Model m;
  m.label = which;
  if (which == "teacher" || which == "untrained") {
    m.ctx = std::make_shared<RunContext>(make_context(cfg));
    if (which == "teacher") {
      m.sampler = eval::teacher_sampler(m.ctx->teacher, cfg.eval.omega, cfg.eval.teacher_steps);
    } else {
      auto st = std::make_shared<const ConsistencyStudent>(init_state(*m.ctx).student);
      m.sampler = eval::student_sampler(st, cfg.eval.omega, cfg.eval.student_steps);
    }
    return m;
  }
  auto [ctx, state] = load_run(which);
  m.label = fs::path(which).stem().string();
  m.ctx = std::make_shared<RunContext>(std::move(ctx));
  const auto& ev = m.ctx->config.eval;
  auto st = std::make_shared<const ConsistencyStudent>(std::move(state.student));
  m.sampler = eval::student_sampler(st, ev.omega, ev.student_steps);
  return m;
}

std::span<const Prompt> heldout(const RunContext& ctx, std::size_t count) {
  const auto& p = ctx.dataset.heldout_prompts();
  if (count == 0) count = ctx.config.eval.prompts;
  if (count > p.size()) {
    throw DomainError("asked for " + std::to_string(count) + " prompts, only " +
                      std::to_string(p.size()) + " held out");
  }
  return {p.data(), count};
}

// ------------------------------------------------------------------ commands

int cmd_train(const ConfigArgs& ca, const std::string& out_dir, const std::string& resume,
              std::size_t stop_after, bool quiet, std::ostream& out) {
  const RunConfig cfg = load_config(ca);
  const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", serialize_config(cfg));
  const RunContext ctx = make_context(cfg);
  RunOptions opt;
  opt.checkpoint_dir = dir;
  if (!resume.empty()) opt.resume_from = resume;
  opt.stop_after = stop_after;
  const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 10);
  if (!quiet) {
    opt.on_step = [&](const LossReport& r) {
      if ((r.step + 1) % every == 0) {
        out << "step " << r.step + 1 << " l_cd " << r.l_cd << " j_img " << r.j_img << " j_vid "
            << r.j_vid << '\n';
      }
    };
  }
  const TrainerState st = train_run(ctx, opt);
  write_loss_curve(dir / "loss_curve.csv", st.history);
  write_probe_curve(dir / "probe_curve.csv", st.probes);
  if (st.step < cfg.train.steps) {
    const fs::path ckpt = dir / ("checkpoint_" + std::to_string(st.step) + ".rgcd");
    write_checkpoint(ckpt, to_checkpoint(st));
    out << "stopped at step " << st.step << ", checkpoint " << ckpt.string() << '\n';
  } else {
    out << "trained " << st.step << " steps, checkpoint " << (dir / "final.rgcd").string() << '\n';
  }
  return 0;
}

int cmd_sample(const ConfigArgs& ca, const std::string& model_name, std::size_t prompt,
               std::size_t count, std::uint64_t seed, const std::string& out_path,
               std::ostream& out) {
  const RunConfig cfg = load_config(ca);
  const Model m = load_model(model_name, cfg);
  const auto& prompts = m.ctx->dataset.heldout_prompts();
  if (prompt >= prompts.size()) throw DomainError("prompt index out of range");
  const Prompt& p = prompts[prompt];
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < count; ++s) seeds.push_back(eval::sample_seed(seed, p, s));
  const Array z = m.sampler(p, seeds);
  const auto& shape = m.ctx->dataset.library().latent();
  const Codec& codec = m.ctx->dataset.rewards().codec;
  std::ostringstream os;
  os << "sample,prompt,class,frame";
  for (std::size_t d = 0; d < shape.dim; ++d) os << ",z" << d;
  for (std::size_t q = 0; q < codec.pixel_dim(); ++q) os << ",x" << q;
  os << '\n';
  for (std::size_t s = 0; s < count; ++s) {
    const LatentSequence seq = LatentSequence::from_batch(z, s, shape);
    const Array x = codec.decode(seq.values());
    for (std::size_t f = 0; f < shape.frames; ++f) {
      os << s << ',' << p.id << ',' << p.cls << ',' << f;
      for (std::size_t d = 0; d < shape.dim; ++d) os << ',' << fmt(seq.values().at(f, d));
      for (std::size_t q = 0; q < codec.pixel_dim(); ++q) os << ',' << fmt(x.at(f, q));
      os << '\n';
    }
  }
  if (out_path.empty()) {
    out << os.str();
  } else {
    write_text(out_path, os.str());
    out << "wrote " << count << " samples to " << out_path << '\n';
  }
  return 0;
}

int cmd_eval(const ConfigArgs& ca, const std::string& model_name, std::size_t prompts,
             const std::string& stem, std::ostream& out) {
  const RunConfig cfg = load_config(ca);
  const Model m = load_model(model_name, cfg);
  const auto& ev = m.ctx->config.eval;
  const auto plugins = eval::synthetic_plugins();
  const eval::MetricContext mctx{&m.ctx->dataset.library(), &m.ctx->dataset.rewards()};
  eval::BenchmarkReport r =
      eval::run_benchmark(m.sampler, heldout(*m.ctx, prompts), plugins,
                          eval::AggregationRule::standard(), mctx,
                          {ev.samples_per_prompt, ev.threads, m.ctx->config.seed});
  r.metadata.insert(r.metadata.begin(), {"model", m.label});
  const fs::path p = stem.empty() ? fs::path(m.ctx->config.output_dir) / "report" : fs::path(stem);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  eval::write_report(p, r);
  auto show = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); };
  out << "quality " << show(r.aggregates.quality) << " semantic " << show(r.aggregates.semantic)
      << " total " << show(r.aggregates.total) << '\n';
  for (const auto& d : r.dimensions) {
    if (d.error) out << "dimension " << d.name << " failed: " << *d.error << '\n';
  }
  return 0;
}

eval::PairwiseJudge make_judge(const std::string& kind, const RunContext& ctx) {
  const auto& suite = ctx.dataset.rewards();
  RewardWeights w = suite.weights;
  if (kind == "frame") {
    w.beta_img = 1.0;
    w.beta_vid = 0.0;
  } else if (kind == "sequence") {
    w.beta_img = 0.0;
    w.beta_vid = 1.0;
  } else if (kind == "combined") {
    w.beta_img = ctx.config.reward.beta_img;
    w.beta_vid = ctx.config.reward.beta_vid;
  } else {
    throw DomainError("unknown judge '" + kind + "' (expected frame, sequence or combined)");
  }
  auto j = eval::reward_judge(suite, w, ctx.config.eval.tie_delta);
  j.name = kind;
  return j;
}

int cmd_compare(const ConfigArgs& ca, const std::string& a_name, const std::string& b_name,
                const std::string& judge_kind, std::size_t prompts, std::size_t samples,
                const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = load_config(ca);
  const Model a = load_model(a_name, cfg);
  const Model b = load_model(b_name, cfg);
  const auto ps = heldout(*a.ctx, prompts == 0 ? a.ctx->dataset.heldout_prompts().size() : prompts);
  const auto judge = make_judge(judge_kind, *a.ctx);
  const auto t = eval::pairwise_compare(a.sampler, b.sampler, ps, judge,
                                        {samples, a.ctx->config.eval.threads, a.ctx->config.seed},
                                        a.label, b.label);
  const std::string csv = eval::pairwise_csv(t);
  if (out_path.empty()) {
    out << csv;
  } else {
    write_text(out_path, csv);
    out << "overall: " << t.label_a << " wins " << t.questions[2].wins << ", ties "
        << t.questions[2].ties << ", losses " << t.questions[2].losses << '\n';
  }
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw DomainError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw DomainError("no seeds given");
  return out;
}

int cmd_ablate(const ConfigArgs& ca, const std::string& seeds_text, const std::string& stem,
               bool quiet, std::ostream& out) {
  const RunConfig cfg = load_config(ca);
  const auto seeds = parse_seeds(seeds_text);
  eval::AblationOptions opt;
  if (!quiet) {
    opt.on_run = [&](const eval::AblationVariant& v, std::uint64_t seed) {
      out << "training " << v.name << " seed " << seed << '\n' << std::flush;
    };
  }
  const auto table = eval::ablation_suite(cfg, seeds, opt);
  const fs::path p = stem.empty() ? fs::path(cfg.output_dir) / "ablation" : fs::path(stem);
  auto csv = p, json = p;
  csv += ".csv";
  json += ".json";
  write_text(csv, eval::ablation_csv(table));
  write_text(json, eval::ablation_json(table));
  for (const auto& row : table.rows) {
    const auto r = row.mean_rewards();
    out << row.variant.name << " frame " << fmt(r.frame) << " sequence " << fmt(r.sequence)
        << " combined " << fmt(r.combined) << " failures " << row.failures() << '\n';
  }
  return 0;
}

int cmd_leaderboard(const std::string& path, const std::string& out_path, double tolerance,
                    std::ostream& out) {
  const auto scores = eval::recompute_leaderboard(eval::read_leaderboard(path),
                                                  eval::AggregationRule::standard());
  const std::string csv = eval::leaderboard_csv(scores);
  if (out_path.empty()) out << csv;
  else write_text(out_path, csv);
  if (tolerance > 0.0) {
    for (const auto& s : scores) {
      if (s.published_total && std::abs(s.total - *s.published_total) > tolerance) {
        throw NumericError("model '" + s.model + "' total " + fmt(s.total) + " differs from " +
                           fmt(*s.published_total) + " by more than " + fmt(tolerance));
      }
    }
  }
  return 0;
}

int cmd_gradcheck(std::size_t seeds, double tolerance, std::ostream& out) {
  const auto entries = run_gradcheck_suite(seeds);
  bool ok = true;
  char line[128];
  for (const auto& e : entries) {
    const bool pass = e.max_rel_error < tolerance;
    ok = ok && pass;
    std::snprintf(line, sizeof line, "%-24s %.3e %s\n", e.name.c_str(), e.max_rel_error,
                  pass ? "ok" : "FAIL");
    out << line;
  }
  if (!ok) throw NumericError("gradient check exceeded " + fmt(tolerance));
  return 0;
}

int cmd_plot(const std::string& ckpt, const std::string& dir, std::size_t window,
             std::ostream& out) {
  if (window == 0) throw DomainError("window must be positive");
  auto [ctx, st] = load_run(ckpt);
  const fs::path d = dir.empty() ? fs::path(ctx.config.output_dir) / "plot" : fs::path(dir);
  fs::create_directories(d);
  // Trailing moving average over `window` steps.
  std::ostringstream os;
  os << "step,l_cd,j_img,j_vid,total\n";
  const auto& h = st.history;
  double acc[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v[4] = {h[i].l_cd, h[i].j_img, h[i].j_vid, h[i].total};
    for (int k = 0; k < 4; ++k) acc[k] += v[k];
    if (i >= window) {
      const double o[4] = {h[i - window].l_cd, h[i - window].j_img, h[i - window].j_vid,
                           h[i - window].total};
      for (int k = 0; k < 4; ++k) acc[k] -= o[k];
    }
    const double n = static_cast<double>(std::min(window, i + 1));
    os << h[i].step << ',' << fmt(acc[0] / n) << ',' << fmt(acc[1] / n) << ',' << fmt(acc[2] / n)
       << ',' << fmt(acc[3] / n) << '\n';
  }
  write_text(d / "loss.csv", os.str());
  write_probe_curve(d / "probes.csv", st.probes);
  out << "wrote " << (d / "loss.csv").string() << " and " << (d / "probes.csv").string() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward-guided consistency distillation of a toy video diffusion model", "rgcd"};
  app.require_subcommand(1);

  ConfigArgs ca;
  std::string out_dir, resume, model = "teacher", model_b, out_path, judge = "sequence",
                               seeds = "1,2,3", path;
  std::size_t stop_after = 0, prompt = 0, count = 4, prompts = 0, samples = 1, window = 1,
              grad_seeds = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-5, lb_tolerance = 0.0;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Distill a student; writes checkpoints and curves");
  add_config_options(train, ca);
  train->add_option("-o,--out", out_dir, "Run directory (default: output_dir)");
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after", stop_after, "Stop after this many total steps");
  train->add_flag("-q,--quiet", quiet, "No progress lines");

  auto* sample = app.add_subcommand("sample", "Write latent and decoded sequences as CSV");
  add_config_options(sample, ca);
  sample->add_option("-m,--model", model, "teacher, untrained, or a checkpoint path");
  sample->add_option("-p,--prompt", prompt, "Held-out prompt index");
  sample->add_option("-n,--count", count, "Samples to draw")->check(CLI::PositiveNumber);
  sample->add_option("--seed", seed, "Sample seed");
  sample->add_option("-o,--out", out_path, "Output file (default: stdout)");

  auto* ev = app.add_subcommand("eval", "Benchmark a model on held-out prompts");
  add_config_options(ev, ca);
  ev->add_option("-m,--model", model, "teacher, untrained, or a checkpoint path");
  ev->add_option("--prompts", prompts, "Prompt count (default: eval.prompts)");
  ev->add_option("-o,--out", out_path, "Report path stem; writes .json and .csv");

  auto* cmp = app.add_subcommand("compare", "Pairwise win/tie/loss between two models");
  add_config_options(cmp, ca);
  cmp->add_option("-a", model, "First model")->required();
  cmp->add_option("-b", model_b, "Second model")->required();
  cmp->add_option("-j,--judge", judge, "frame, sequence or combined");
  cmp->add_option("--prompts", prompts, "Prompt count (default: all held-out)");
  cmp->add_option("--samples", samples, "Samples per prompt")->check(CLI::PositiveNumber);
  cmp->add_option("-o,--out", out_path, "Output CSV (default: stdout)");

  auto* abl = app.add_subcommand("ablate", "Train and score the four reward variants");
  add_config_options(abl, ca);
  abl->add_option("--seeds", seeds, "Comma-separated seeds");
  abl->add_option("-o,--out", out_path, "Output path stem; writes .csv and .json");
  abl->add_flag("-q,--quiet", quiet, "No progress lines");

  auto* lb = app.add_subcommand("recompute-leaderboard", "Recompute totals from a leaderboard CSV");
  lb->add_option("file", path, "Leaderboard CSV")->required()->check(CLI::ExistingFile);
  lb->add_option("-o,--out", out_path, "Output CSV (default: stdout)");
  lb->add_option("--check", lb_tolerance, "Fail if any total differs from the table by more");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--seeds", grad_seeds, "Draws per check")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", tolerance, "Maximum relative error");

  auto* plot = app.add_subcommand("plot", "Curve data from a checkpoint's history");
  plot->add_option("checkpoint", path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out", out_dir, "Output directory");
  plot->add_option("-w,--window", window, "Moving-average window")->check(CLI::PositiveNumber);

  if (argc > 1 && argv[1][0] != '-') {
    const auto subs = app.get_subcommands([&](CLI::App* a) { return a->get_name() == argv[1]; });
    if (subs.empty()) {
      err << app.help();
      err << "error: usage: unknown subcommand '" << argv[1] << "'\n";
      return 2;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << app.help();
    err << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*train) return cmd_train(ca, out_dir, resume, stop_after, quiet, out);
    if (*sample) return cmd_sample(ca, model, prompt, count, seed, out_path, out);
    if (*ev) return cmd_eval(ca, model, prompts, out_path, out);
    if (*cmp) return cmd_compare(ca, model, model_b, judge, prompts, samples, out_path, out);
    if (*abl) return cmd_ablate(ca, seeds, out_path, quiet, out);
    if (*lb) return cmd_leaderboard(path, out_path, lb_tolerance, out);
    if (*gc) return cmd_gradcheck(grad_seeds, tolerance, out);
    if (*plot) return cmd_plot(path, out_dir, window, out);
  } catch (const ConfigError& e) {
    std::string msg;
    for (const auto& v : e.violations()) msg += (msg.empty() ? "" : "; ") + v;
    err << "error: config: " << one_line(msg) << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace rgcd::cli
