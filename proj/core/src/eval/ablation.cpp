#include "rgcd/eval/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "rgcd/error.hpp"

namespace rgcd::eval {

std::vector<AblationVariant> standard_variants(double beta_img, double beta_vid) {
  return {{"vcm", 0.0, 0.0},
          {"r_img", beta_img, 0.0},
          {"r_vid", 0.0, beta_vid},
          {"combined", beta_img, beta_vid}};
}

std::size_t AblationRow::failures() const {
  std::size_t n = 0;
  for (const auto& r : runs) n += r.error ? 1 : 0;
  return n;
}

HeldoutRewards AblationRow::mean_rewards() const {
  HeldoutRewards m;
  const double ok = static_cast<double>(runs.size() - failures());
  if (ok == 0.0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  for (const auto& r : runs) {
    if (r.error) continue;
    m.frame += r.rewards.frame / ok;
    m.sequence += r.rewards.sequence / ok;
    m.combined += r.rewards.combined / ok;
  }
  return m;
}

std::vector<double> AblationRow::mean_dimensions() const {
  std::vector<double> m;
  double ok = 0.0;
  for (const auto& r : runs) {
    if (r.error) continue;
    if (m.empty()) m.assign(r.dimensions.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += r.dimensions[i];
    ok += 1.0;
  }
  for (double& v : m) v /= ok;
  return m;
}

Aggregates AblationRow::mean_aggregates() const {
  Aggregates a;
  auto mean_of = [&](auto field) -> std::optional<double> {
    double s = 0.0, n = 0.0;
    for (const auto& r : runs) {
      if (r.error) continue;
      const std::optional<double>& v = r.aggregates.*field;
      if (!v) return std::nullopt;
      s += *v;
      n += 1.0;
    }
    if (n == 0.0) return std::nullopt;
    return s / n;
  };
  a.quality = mean_of(&Aggregates::quality);
  a.semantic = mean_of(&Aggregates::semantic);
  a.total = mean_of(&Aggregates::total);
  return a;
}

AblationTable ablation_suite(const RunConfig& base, std::span<const std::uint64_t> seeds,
                             const AblationOptions& options) {
  if (auto v = validate(base); !v.empty()) throw ConfigError(std::move(v));
  if (seeds.empty()) throw DomainError("ablation needs at least one seed");
  AblationTable table;
  table.scoring = RewardWeights{base.reward.beta_img, base.reward.beta_vid,
                                base.reward.frames_sampled};
  const auto variants = options.variants.empty()
                            ? standard_variants(base.reward.beta_img, base.reward.beta_vid)
                            : options.variants;
  const auto rule = AggregationRule::standard();
  const auto plugins = synthetic_plugins();
  for (const auto& p : plugins) table.dimensions.push_back(p.dimension);

  for (const auto& v : variants) table.rows.push_back(AblationRow{v, {}});
  for (std::uint64_t seed : seeds) {
    for (auto& row : table.rows) {
      if (options.on_run) options.on_run(row.variant, seed);
      AblationRun run;
      run.seed = seed;
      try {
        RunConfig cfg = base;
        cfg.seed = seed;
        cfg.reward.beta_img = row.variant.beta_img;
        cfg.reward.beta_vid = row.variant.beta_vid;
        const RunContext ctx = make_context(cfg);
        TrainerState st = train_run(ctx);
        run.rewards = heldout_rewards(ctx, st.student, cfg.eval.student_steps, table.scoring);

        const std::size_t np =
            options.benchmark_prompts ? options.benchmark_prompts : cfg.eval.prompts;
        const auto& held = ctx.dataset.heldout_prompts();
        if (np > held.size()) throw DomainError("not enough held-out prompts for the benchmark");
        auto student = std::make_shared<const ConsistencyStudent>(std::move(st.student));
        const auto sampler = student_sampler(student, cfg.eval.omega, cfg.eval.student_steps);
        const MetricContext mctx{&ctx.dataset.library(), &ctx.dataset.rewards()};
        BenchmarkOptions bo{cfg.eval.samples_per_prompt, cfg.eval.threads, seed};
        const auto report = run_benchmark(sampler, std::span(held.data(), np), plugins, rule, mctx, bo);
        run.aggregates = report.aggregates;
        for (const auto& d : report.dimensions) run.dimensions.push_back(d.score.normalized);
      } catch (const Error& e) {
        run.error = std::string(e.category()) + ": " + e.what();
      }
      row.runs.push_back(std::move(run));
    }
  }
  return table;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << "variant,beta_img,beta_vid,runs,failures,frame_reward,sequence_reward,combined_reward,"
        "quality,semantic,total";
  for (const auto& d : t.dimensions) os << ',' << d;
  os << '\n';
  for (const auto& row : t.rows) {
    const auto r = row.mean_rewards();
    const auto a = row.mean_aggregates();
    os << row.variant.name << ',' << fmt(row.variant.beta_img) << ',' << fmt(row.variant.beta_vid)
       << ',' << row.runs.size() << ',' << row.failures() << ',' << fmt(r.frame) << ','
       << fmt(r.sequence) << ',' << fmt(r.combined) << ',' << fmt(a.quality) << ','
       << fmt(a.semantic) << ',' << fmt(a.total);
    const auto dims = row.mean_dimensions();
    for (std::size_t i = 0; i < t.dimensions.size(); ++i) {
      os << ',' << (i < dims.size() ? fmt(dims[i]) : std::string());
    }
    os << '\n';
  }
  return os.str();
}

std::string ablation_json(const AblationTable& t) {
  using nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  ordered_json j;
  j["scoring"] = {{"beta_img", t.scoring.beta_img},
                  {"beta_vid", t.scoring.beta_vid},
                  {"frames_sampled", t.scoring.frames_sampled}};
  j["dimensions"] = t.dimensions;
  j["rows"] = ordered_json::array();
  for (const auto& row : t.rows) {
    ordered_json o;
    o["variant"] = row.variant.name;
    o["beta_img"] = row.variant.beta_img;
    o["beta_vid"] = row.variant.beta_vid;
    o["runs"] = ordered_json::array();
    for (const auto& r : row.runs) {
      ordered_json q;
      q["seed"] = r.seed;
      q["error"] = r.error ? ordered_json(*r.error) : ordered_json(nullptr);
      q["frame_reward"] = num(r.rewards.frame);
      q["sequence_reward"] = num(r.rewards.sequence);
      q["combined_reward"] = num(r.rewards.combined);
      q["quality"] = opt(r.aggregates.quality);
      q["semantic"] = opt(r.aggregates.semantic);
      q["total"] = opt(r.aggregates.total);
      q["dimensions"] = ordered_json::array();
      for (double v : r.dimensions) q["dimensions"].push_back(num(v));
      o["runs"].push_back(std::move(q));
    }
    j["rows"].push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

}  // namespace rgcd::eval
