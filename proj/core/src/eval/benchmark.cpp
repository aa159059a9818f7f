#include "rgcd/eval/benchmark.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace rgcd::eval {

namespace {

// Calls work(i) for i in [0, n) on up to `threads` workers. The first
// exception by index is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& work) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::uint64_t> seeds_for(std::uint64_t seed, const Prompt& p, std::size_t count) {
  std::vector<std::uint64_t> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = sample_seed(seed, p, i);
  return s;
}

Array row_of(const Array& batch, std::size_t r) {
  const std::size_t w = batch.cols();
  std::vector<double> v(batch.values().begin() + static_cast<std::ptrdiff_t>(r * w),
                        batch.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
  return Array({w}, std::move(v));
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t seed, const Prompt& prompt, std::size_t s) {
  return stream_key(seed, Stream::eval, prompt.id, s);
}

Sampler teacher_sampler(std::shared_ptr<const Teacher> teacher, double omega, std::size_t steps) {
  return [teacher = std::move(teacher), omega, steps](const Prompt& p,
                                                      std::span<const std::uint64_t> seeds) {
    const std::vector<std::size_t> classes(seeds.size(), p.cls);
    return ddim_sample_batch(*teacher, classes, omega, steps, seeds);
  };
}

Sampler student_sampler(std::shared_ptr<const ConsistencyStudent> student, double omega,
                        std::size_t steps) {
  return [student = std::move(student), omega, steps](const Prompt& p,
                                                      std::span<const std::uint64_t> seeds) {
    const std::size_t dc = p.embedding.size();
    Array emb({seeds.size(), dc});
    for (std::size_t r = 0; r < seeds.size(); ++r) {
      for (std::size_t j = 0; j < dc; ++j) emb[r * dc + j] = p.embedding[j];
    }
    return consistency_sample_batch(*student, student->online(), emb, omega, steps, seeds);
  };
}

double QuestionTally::win_rate() const {
  return total() ? static_cast<double>(wins) / static_cast<double>(total()) : 0.0;
}
double QuestionTally::tie_rate() const {
  return total() ? static_cast<double>(ties) / static_cast<double>(total()) : 0.0;
}
double QuestionTally::loss_rate() const {
  return total() ? static_cast<double>(losses) / static_cast<double>(total()) : 0.0;
}

BenchmarkReport run_benchmark(const Sampler& sampler, std::span<const Prompt> prompts,
                              std::span<const MetricPlugin> plugins, const AggregationRule& rule,
                              const MetricContext& context, const BenchmarkOptions& options) {
  rule.validate();
  if (!context.library || !context.rewards) throw DomainError("metric context is incomplete");
  if (options.samples_per_prompt == 0) throw DomainError("samples_per_prompt must be positive");
  if (prompts.empty()) throw DomainError("benchmark needs at least one prompt");
  for (const auto& name : rule.dimension_names()) {
    const bool covered = std::any_of(plugins.begin(), plugins.end(),
                                     [&](const MetricPlugin& p) { return p.dimension == name; });
    if (!covered) throw DomainError("no plugin covers dimension '" + name + "'");
  }
  for (const auto& p : plugins) {
    if (!(p.hi > p.lo)) throw DomainError("plugin '" + p.dimension + "' needs hi > lo");
  }

  const std::size_t np = prompts.size(), nd = plugins.size(), ns = options.samples_per_prompt;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // Per prompt: per-dimension sample values and the first error message.
  struct Slot {
    std::vector<std::vector<double>> values;
    std::vector<std::string> errors;
  };
  std::vector<Slot> slots(np);

  parallel_for(np, options.threads, [&](std::size_t i) {
    const Prompt& p = prompts[i];
    const auto seeds = seeds_for(options.seed, p, ns);
    const Array batch = sampler(p, seeds);
    if (batch.rows() != ns) throw ShapeError("sampler returned the wrong number of rows");
    Slot& slot = slots[i];
    slot.values.assign(nd, std::vector<double>(ns, nan));
    slot.errors.assign(nd, std::string());
    for (std::size_t s = 0; s < ns; ++s) {
      const Array z = row_of(batch, s);
      for (std::size_t d = 0; d < nd; ++d) {
        if (!slot.errors[d].empty()) continue;
        try {
          const double v = plugins[d].score(z, p, context);
          if (!std::isfinite(v)) throw NumericError("non-finite value");
          slot.values[d][s] = v;
        } catch (const std::exception& e) {
          slot.errors[d] = "prompt " + std::to_string(p.id) + ": " + e.what();
        }
      }
    }
  });

  BenchmarkReport report;
  report.metadata = {{"prompts", std::to_string(np)},
                     {"samples_per_prompt", std::to_string(ns)},
                     {"seed", std::to_string(options.seed)}};
  for (std::size_t i = 0; i < np; ++i) {
    PromptResult pr{prompts[i].id, prompts[i].cls, std::vector<double>(nd, nan)};
    for (std::size_t d = 0; d < nd; ++d) {
      if (!slots[i].errors[d].empty()) continue;
      double s = 0.0;
      for (double v : slots[i].values[d]) s += v;
      pr.raw[d] = s / static_cast<double>(ns);
    }
    report.prompts.push_back(std::move(pr));
  }
  for (std::size_t d = 0; d < nd; ++d) {
    const MetricPlugin& plug = plugins[d];
    DimensionResult r;
    r.name = plug.dimension;
    r.group = rule.is_quality(plug.dimension)    ? "quality"
              : rule.is_semantic(plug.dimension) ? "semantic"
                                                 : "extra";
    for (std::size_t i = 0; i < np && !r.error; ++i) {
      if (!slots[i].errors[d].empty()) r.error = slots[i].errors[d];
    }
    if (!r.error) {
      const std::size_t n = np * ns;
      double mean = 0.0;
      for (const auto& slot : slots) {
        for (double v : slot.values[d]) mean += v;
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const auto& slot : slots) {
        for (double v : slot.values[d]) var += (v - mean) * (v - mean);
      }
      var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
      r.count = n;
      r.raw_mean = mean;
      r.std_error = std::sqrt(var / static_cast<double>(n));
      r.score = DimensionScore::make(plug.dimension, mean, plug.lo, plug.hi);
    } else {
      r.score = DimensionScore{plug.dimension, nan, plug.lo, plug.hi, nan};
    }
    report.dimensions.push_back(std::move(r));
  }
  report.aggregates = recompute_aggregates(report.dimensions, rule);
  return report;
}

Aggregates recompute_aggregates(std::span<const DimensionResult> dimensions,
                                const AggregationRule& rule) {
  std::vector<DimensionScore> ok;
  for (const auto& d : dimensions) {
    if (!d.error) ok.push_back(d.score);
  }
  Aggregates a;
  try {
    a.quality = quality_score(ok, rule);
  } catch (const DomainError&) {
  }
  try {
    a.semantic = semantic_score(ok, rule);
  } catch (const DomainError&) {
  }
  if (a.quality && a.semantic) a.total = total_score(*a.quality, *a.semantic, rule);
  return a;
}

PairwiseJudge reward_judge(const RewardSuite& suite, const RewardWeights& overall, double delta) {
  auto one = [suite](auto metric) {
    return [suite, metric](const Array& z, const Prompt& p) {
      const Array row = z.reshaped({1, z.size()});
      const std::size_t cls[] = {p.cls};
      return metric(suite, row, std::span<const std::size_t>(cls))[0];
    };
  };
  PairwiseJudge j;
  j.name = "reward(img=" + std::to_string(overall.beta_img) +
           ",vid=" + std::to_string(overall.beta_vid) + ")";
  j.questions[0] = one(frame_metric);
  j.questions[1] = one(sequence_metric);
  j.questions[2] = [suite, overall](const Array& z, const Prompt& p) {
    const Array row = z.reshaped({1, z.size()});
    const std::size_t cls[] = {p.cls};
    return overall.beta_img * frame_metric(suite, row, cls)[0] +
           overall.beta_vid * sequence_metric(suite, row, cls)[0];
  };
  j.delta = delta;
  return j;
}

PairwiseTable pairwise_compare(const Sampler& a, const Sampler& b, std::span<const Prompt> prompts,
                               const PairwiseJudge& judge, const PairwiseOptions& options,
                               std::string label_a, std::string label_b) {
  if (options.samples_per_prompt == 0) throw DomainError("samples_per_prompt must be positive");
  if (!(judge.delta >= 0.0)) throw DomainError("tie threshold must be non-negative");
  const std::size_t np = prompts.size(), ns = options.samples_per_prompt;
  // Per prompt and question: the score difference A - B.
  std::vector<std::array<double, 3>> diff(np);
  parallel_for(np, options.threads, [&](std::size_t i) {
    const Prompt& p = prompts[i];
    const auto seeds = seeds_for(options.seed, p, ns);
    const Array xa = a(p, seeds), xb = b(p, seeds);
    for (std::size_t q = 0; q < 3; ++q) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t s = 0; s < ns; ++s) {
        sa += judge.questions[q](row_of(xa, s), p);
        sb += judge.questions[q](row_of(xb, s), p);
      }
      diff[i][q] = sa / static_cast<double>(ns) - sb / static_cast<double>(ns);
    }
  });
  PairwiseTable t{std::move(label_a), std::move(label_b), judge.name, {}};
  for (const auto& d : diff) {
    for (std::size_t q = 0; q < 3; ++q) {
      if (d[q] > judge.delta) {
        ++t.questions[q].wins;
      } else if (d[q] < -judge.delta) {
        ++t.questions[q].losses;
      } else {
        ++t.questions[q].ties;
      }
    }
  }
  return t;
}

namespace {

using nlohmann::ordered_json;

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

ordered_json pairwise_object(const PairwiseTable& t) {
  ordered_json o;
  o["a"] = t.label_a;
  o["b"] = t.label_b;
  o["judge"] = t.judge;
  for (std::size_t q = 0; q < 3; ++q) {
    const auto& c = t.questions[q];
    o["questions"][kQuestions[q]] = {{"wins", c.wins},
                                     {"ties", c.ties},
                                     {"losses", c.losses},
                                     {"win_rate", c.win_rate()},
                                     {"tie_rate", c.tie_rate()},
                                     {"loss_rate", c.loss_rate()}};
  }
  return o;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

std::string report_json(const BenchmarkReport& r) {
  ordered_json j;
  j["metadata"] = ordered_json::object();
  for (const auto& [k, v] : r.metadata) j["metadata"][k] = v;
  j["dimensions"] = ordered_json::array();
  for (const auto& d : r.dimensions) {
    ordered_json o;
    o["name"] = d.name;
    o["group"] = d.group;
    o["count"] = d.count;
    o["raw_mean"] = num(d.raw_mean);
    o["std_error"] = num(d.std_error);
    o["lo"] = d.score.lo;
    o["hi"] = d.score.hi;
    o["normalized"] = num(d.score.normalized);
    o["error"] = d.error ? ordered_json(*d.error) : ordered_json(nullptr);
    j["dimensions"].push_back(std::move(o));
  }
  j["aggregates"] = {{"quality", opt(r.aggregates.quality)},
                     {"semantic", opt(r.aggregates.semantic)},
                     {"total", opt(r.aggregates.total)}};
  j["prompts"] = ordered_json::array();
  for (const auto& p : r.prompts) {
    ordered_json o;
    o["prompt"] = p.prompt;
    o["class"] = p.cls;
    o["raw"] = ordered_json::array();
    for (double v : p.raw) o["raw"].push_back(num(v));
    j["prompts"].push_back(std::move(o));
  }
  j["pairwise"] = ordered_json::array();
  for (const auto& t : r.pairwise) j["pairwise"].push_back(pairwise_object(t));
  return j.dump(2) + "\n";
}

std::string report_csv(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "section,name,field,value\n";
  for (const auto& d : r.dimensions) {
    if (d.error) {
      os << "dimension," << d.name << ",error,1\n";
      continue;
    }
    os << "dimension," << d.name << ",raw_mean," << fmt(d.raw_mean) << '\n';
    os << "dimension," << d.name << ",std_error," << fmt(d.std_error) << '\n';
    os << "dimension," << d.name << ",normalized," << fmt(d.score.normalized) << '\n';
  }
  os << "aggregate,quality,value," << fmt(r.aggregates.quality) << '\n';
  os << "aggregate,semantic,value," << fmt(r.aggregates.semantic) << '\n';
  os << "aggregate,total,value," << fmt(r.aggregates.total) << '\n';
  for (const auto& t : r.pairwise) {
    for (std::size_t q = 0; q < 3; ++q) {
      const auto& c = t.questions[q];
      const std::string name = t.label_a + "_vs_" + t.label_b + "." + kQuestions[q];
      os << "pairwise," << name << ",wins," << c.wins << '\n';
      os << "pairwise," << name << ",ties," << c.ties << '\n';
      os << "pairwise," << name << ",losses," << c.losses << '\n';
    }
  }
  return os.str();
}

std::string pairwise_csv(const PairwiseTable& t) {
  std::ostringstream os;
  os << "question,wins,ties,losses,win_rate,tie_rate,loss_rate\n";
  for (std::size_t q = 0; q < 3; ++q) {
    const auto& c = t.questions[q];
    os << kQuestions[q] << ',' << c.wins << ',' << c.ties << ',' << c.losses << ','
       << fmt(c.win_rate()) << ',' << fmt(c.tie_rate()) << ',' << fmt(c.loss_rate()) << '\n';
  }
  return os.str();
}

void write_report(const std::filesystem::path& stem, const BenchmarkReport& report) {
  auto json = stem, csv = stem;
  json += ".json";
  csv += ".csv";
  write_text(json, report_json(report));
  write_text(csv, report_csv(report));
}

}  // namespace rgcd::eval
