#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "helpers.hpp"
#include "rgcd/error.hpp"
#include "rgcd/eval/aggregation.hpp"
#include "rgcd/eval/benchmark.hpp"
#include "rgcd/eval/leaderboard.hpp"
#include "rgcd/eval/metrics.hpp"
#include "rgcd/trainer.hpp"

using namespace rgcd;
using namespace rgcd::eval;

namespace {

std::vector<DimensionScore> all_scores(double quality, double semantic) {
  const auto rule = AggregationRule::standard();
  std::vector<DimensionScore> s;
  for (const auto& d : rule.quality) s.push_back(DimensionScore::make(d.name, quality));
  for (const auto& d : rule.semantic) s.push_back(DimensionScore::make(d.name, semantic));
  return s;
}

MetricPlugin constant_plugin(std::string name, double v) {
  return {std::move(name), 0.0, 1.0, [v](const Array&, const Prompt&, const MetricContext&) { return v; }};
}

Sampler zero_sampler(std::size_t width) {
  return [width](const Prompt&, std::span<const std::uint64_t> seeds) {
    return Array({seeds.size(), width}, 0.0);
  };
}

std::vector<MetricPlugin> constant_plugins(double v) {
  std::vector<MetricPlugin> plugins;
  for (const auto& n : AggregationRule::standard().dimension_names()) plugins.push_back(constant_plugin(n, v));
  return plugins;
}

const MetricContext& tiny_context() {
  static const SyntheticDataset data = generate_dataset(test::tiny_config(), 0);
  static const MetricContext ctx{&data.library(), &data.rewards()};
  return ctx;
}

}  // namespace

TEST(Aggregation, AllOnesScoreOne) {
  const auto rule = AggregationRule::standard();
  const auto s = all_scores(1.0, 1.0);
  EXPECT_DOUBLE_EQ(quality_score(s, rule), 1.0);
  EXPECT_DOUBLE_EQ(semantic_score(s, rule), 1.0);
}

TEST(Aggregation, DynamicDegreeCarriesHalfWeight) {
  const auto rule = AggregationRule::standard();
  auto s = all_scores(0.0, 0.0);
  for (auto& d : s) {
    if (d.name == "dynamic_degree") d = DimensionScore::make(d.name, 1.0);
  }
  EXPECT_NEAR(quality_score(s, rule), 0.5 / 6.5, 1e-15);
}

TEST(Aggregation, SemanticDimensionsShareWeight) {
  const auto rule = AggregationRule::standard();
  auto s = all_scores(0.0, 0.0);
  for (auto& d : s) {
    if (d.name == "color") d = DimensionScore::make(d.name, 0.9);
  }
  EXPECT_NEAR(semantic_score(s, rule), 0.1, 1e-15);
}

TEST(Aggregation, PermutationInvariant) {
  const auto rule = AggregationRule::standard();
  auto s = all_scores(0.0, 0.0);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& d : s) d = DimensionScore::make(d.name, u(gen));
  const double q = quality_score(s, rule), sem = semantic_score(s, rule);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(s.begin(), s.end(), gen);
    EXPECT_NEAR(quality_score(s, rule), q, 1e-15);
    EXPECT_NEAR(semantic_score(s, rule), sem, 1e-15);
  }
}

TEST(Aggregation, TotalScoreExamples) {
  EXPECT_NEAR(total_score(82.20, 73.42), 80.44, 0.005);
  EXPECT_NEAR(total_score(82.57, 74.76), 81.01, 0.005);
  EXPECT_DOUBLE_EQ(total_score(0.5, 0.5), 0.5);
}

TEST(Aggregation, MonotoneInEveryDimension) {
  const auto rule = AggregationRule::standard();
  auto s = all_scores(0.4, 0.4);
  const double base = total_score(quality_score(s, rule), semantic_score(s, rule));
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto t = s;
    t[i] = DimensionScore::make(t[i].name, 0.6);
    EXPECT_GT(total_score(quality_score(t, rule), semantic_score(t, rule)), base) << t[i].name;
  }
}

TEST(Aggregation, NormalizationClampsAndRejects) {
  EXPECT_EQ(normalize(-3.0, 0.0, 1.0), 0.0);
  EXPECT_EQ(normalize(7.0, 0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(normalize(25.0, 0.0, 100.0), 0.25);
  EXPECT_THROW(normalize(0.5, 1.0, 1.0), DomainError);
  EXPECT_THROW(normalize(std::nan(""), 0.0, 1.0), NumericError);
}

TEST(Aggregation, MissingDimensionNamed) {
  const auto rule = AggregationRule::standard();
  auto s = all_scores(1.0, 1.0);
  s.erase(std::remove_if(s.begin(), s.end(), [](const auto& d) { return d.name == "scene"; }),
          s.end());
  EXPECT_DOUBLE_EQ(quality_score(s, rule), 1.0);
  try {
    semantic_score(s, rule);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("'scene'"), std::string::npos);
  }
}

TEST(Aggregation, RuleValidation) {
  auto rule = AggregationRule::standard();
  EXPECT_NO_THROW(rule.validate());
  rule.semantic.push_back({"color", 1.0});
  EXPECT_THROW(rule.validate(), ConfigError);
  rule = AggregationRule::standard();
  rule.quality[0].weight = 0.0;
  EXPECT_THROW(rule.validate(), ConfigError);
}

TEST(Benchmark, FailingPluginOnlyFailsItsDimension) {
  const auto rule = AggregationRule::standard();
  std::vector<MetricPlugin> plugins;
  for (const auto& d : rule.quality) plugins.push_back(constant_plugin(d.name, 0.5));
  for (const auto& d : rule.semantic) plugins.push_back(constant_plugin(d.name, 0.25));
  plugins[3].score = [](const Array&, const Prompt& p, const MetricContext&) -> double {
    if (p.id == 2) throw NumericError("boom");
    return 0.5;
  };
  plugins.push_back({"extra_nan", 0.0, 1.0, [](const Array&, const Prompt&, const MetricContext&) {
                       return std::nan("");
                     }});
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < 4; ++i) prompts.push_back({i, 0, Array({2}, 0.0)});
  BenchmarkOptions opt;
  opt.samples_per_prompt = 2;
  const auto r = run_benchmark(zero_sampler(4), prompts, plugins, rule, tiny_context(), opt);
  ASSERT_EQ(r.dimensions.size(), plugins.size());
  ASSERT_TRUE(r.dimensions[3].error.has_value());
  EXPECT_NE(r.dimensions[3].error->find("boom"), std::string::npos);
  EXPECT_TRUE(r.dimensions.back().error.has_value());
  for (std::size_t d = 0; d < plugins.size() - 1; ++d) {
    if (d != 3) {
      EXPECT_FALSE(r.dimensions[d].error.has_value()) << d;
    }
  }
  EXPECT_FALSE(r.aggregates.quality.has_value());
  ASSERT_TRUE(r.aggregates.semantic.has_value());
  EXPECT_DOUBLE_EQ(*r.aggregates.semantic, 0.25);
  EXPECT_FALSE(r.aggregates.total.has_value());
  EXPECT_TRUE(std::isnan(r.prompts[2].raw[3]));
  EXPECT_EQ(r.prompts[1].raw[3], 0.5);
}

TEST(Benchmark, SamplerErrorPropagates) {
  const auto rule = AggregationRule::standard();
  const auto plugins = constant_plugins(1.0);
  std::vector<Prompt> prompts{{0, 0, Array({2}, 0.0)}};
  const Sampler bad = [](const Prompt&, std::span<const std::uint64_t>) -> Array {
    throw NumericError("sampler failed");
  };
  EXPECT_THROW(run_benchmark(bad, prompts, plugins, rule, tiny_context(), {}), NumericError);
}

TEST(Benchmark, StandardErrorIsSampleSdOverRootN) {
  const auto rule = AggregationRule::standard();
  auto plugins = constant_plugins(1.0);
  plugins.insert(plugins.begin(), {"parity", 0.0, 1.0, [](const Array&, const Prompt& p, const MetricContext&) {
                                     return static_cast<double>(p.id % 2);
                                   }});
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < 8; ++i) prompts.push_back({i, 0, Array({2}, 0.0)});
  BenchmarkOptions opt;
  opt.samples_per_prompt = 1;
  const auto r = run_benchmark(zero_sampler(4), prompts, plugins, rule, tiny_context(), opt);
  EXPECT_EQ(r.dimensions[0].count, 8u);
  EXPECT_DOUBLE_EQ(r.dimensions[0].raw_mean, 0.5);
  EXPECT_NEAR(r.dimensions[0].std_error, std::sqrt((8 * 0.25 / 7.0) / 8.0), 1e-15);
  EXPECT_EQ(r.dimensions[0].group, "extra");
}

class BenchmarkOnModels : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto c = test::tiny_config();
    c.eval.teacher_steps = 10;
    ctx_ = std::make_unique<RunContext>(make_context(c));
  }
  static void TearDownTestSuite() { ctx_.reset(); }
  static std::unique_ptr<RunContext> ctx_;

  static std::vector<Prompt> prompts(std::size_t n) {
    const auto& h = ctx_->dataset.heldout_prompts();
    return {h.begin(), h.begin() + static_cast<std::ptrdiff_t>(std::min(n, h.size()))};
  }
  static MetricContext metric_context() {
    return {&ctx_->dataset.library(), &ctx_->dataset.rewards()};
  }
};
std::unique_ptr<RunContext> BenchmarkOnModels::ctx_;

TEST_F(BenchmarkOnModels, RerunIsIdenticalAndThreadCountInvariant) {
  const auto plugins = synthetic_plugins();
  const auto rule = AggregationRule::standard();
  const auto ps = prompts(6);
  BenchmarkOptions opt;
  opt.samples_per_prompt = 2;
  const auto sampler = teacher_sampler(ctx_->teacher, 7.5, 10);
  const auto a = run_benchmark(sampler, ps, plugins, rule, metric_context(), opt);
  const auto b = run_benchmark(sampler, ps, plugins, rule, metric_context(), opt);
  opt.threads = 3;
  const auto c = run_benchmark(sampler, ps, plugins, rule, metric_context(), opt);
  EXPECT_EQ(report_json(a), report_json(b));
  EXPECT_EQ(report_json(a), report_json(c));
  EXPECT_EQ(report_csv(a), report_csv(c));
}

TEST_F(BenchmarkOnModels, RecomputeMatchesReportedAggregates) {
  const auto plugins = synthetic_plugins();
  const auto rule = AggregationRule::standard();
  BenchmarkOptions opt;
  opt.samples_per_prompt = 1;
  const auto r = run_benchmark(teacher_sampler(ctx_->teacher, 7.5, 10), prompts(4), plugins, rule,
                               metric_context(), opt);
  const auto again = recompute_aggregates(r.dimensions, rule);
  ASSERT_TRUE(r.aggregates.total && again.total);
  EXPECT_EQ(*r.aggregates.total, *again.total);
  EXPECT_NEAR(*r.aggregates.total, total_score(*r.aggregates.quality, *r.aggregates.semantic), 1e-15);
  for (const auto& d : r.dimensions) {
    EXPECT_FALSE(d.error.has_value()) << d.name;
    EXPECT_GE(d.raw_mean, 0.0);
    EXPECT_LE(d.raw_mean, 1.0);
  }
}

TEST_F(BenchmarkOnModels, TeacherBeatsUntrainedStudent) {
  const auto plugins = synthetic_plugins();
  const auto rule = AggregationRule::standard();
  BenchmarkOptions opt;
  opt.samples_per_prompt = 2;
  const auto ps = prompts(8);
  const auto teacher =
      run_benchmark(teacher_sampler(ctx_->teacher, 7.5, 20), ps, plugins, rule, metric_context(), opt);
  auto student = std::make_shared<const ConsistencyStudent>(init_state(*ctx_).student);
  const auto untrained =
      run_benchmark(student_sampler(student, 7.5, 4), ps, plugins, rule, metric_context(), opt);
  EXPECT_GT(*teacher.aggregates.total, *untrained.aggregates.total);
}

TEST_F(BenchmarkOnModels, PairwiseTiesAndAntisymmetry) {
  const auto judge = reward_judge(ctx_->dataset.rewards(), {1.0, 2.0, 2}, 1e-6);
  const auto ps = prompts(8);
  const auto t = teacher_sampler(ctx_->teacher, 7.5, 10);
  auto student = std::make_shared<const ConsistencyStudent>(init_state(*ctx_).student);
  const auto s = student_sampler(student, 7.5, 2);
  const auto same = pairwise_compare(t, t, ps, judge, {});
  for (const auto& q : same.questions) {
    EXPECT_EQ(q.ties, ps.size());
    EXPECT_DOUBLE_EQ(q.tie_rate(), 1.0);
  }
  const auto ab = pairwise_compare(t, s, ps, judge, {});
  const auto ba = pairwise_compare(s, t, ps, judge, {});
  for (std::size_t q = 0; q < 3; ++q) {
    EXPECT_EQ(ab.questions[q].wins, ba.questions[q].losses);
    EXPECT_EQ(ab.questions[q].ties, ba.questions[q].ties);
    EXPECT_EQ(ab.questions[q].total(), ps.size());
  }
  EXPECT_NE(pairwise_csv(ab).find("visual_appeal"), std::string::npos);
}

TEST(Leaderboard, ParsesAndRecomputes) {
  const std::string text =
      "# comment\n"
      "model,total_score,quality_score,semantic_score\n"
      "a,80.44,82.20,73.42\n"
      "\n"
      "b,,82.57,74.76\n";
  const auto board = parse_leaderboard(text);
  ASSERT_EQ(board.rows.size(), 2u);
  const auto scores = recompute_leaderboard(board, AggregationRule::standard());
  EXPECT_NEAR(scores[0].total, 80.44, 0.005);
  ASSERT_TRUE(scores[0].published_total.has_value());
  EXPECT_FALSE(scores[1].published_total.has_value());
  EXPECT_NEAR(scores[1].total, 81.01, 0.005);
  EXPECT_NE(leaderboard_csv(scores).find("published_total"), std::string::npos);
}

TEST(Leaderboard, ParseErrorsCarryLineNumbers) {
  try {
    parse_leaderboard("model,quality_score\na,1,2\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_leaderboard("name,quality_score\n"), FormatError);
  EXPECT_THROW(parse_leaderboard("model,quality_score\na,abc\n"), FormatError);
  EXPECT_THROW(read_leaderboard("/nonexistent/board.csv"), IoError);
}

TEST(Leaderboard, BundledFileReproducesPublishedTotals) {
  const auto board = read_leaderboard(std::string(RGCD_DATA_DIR) + "/leaderboard.csv");
  const auto scores = recompute_leaderboard(board, AggregationRule::standard());
  ASSERT_GE(scores.size(), 10u);
  for (const auto& s : scores) {
    ASSERT_TRUE(s.published_total.has_value()) << s.model;
    EXPECT_NEAR(s.total, *s.published_total, 0.01) << s.model;
  }
}

TEST(Leaderboard, DimensionColumnsAggregateOnLeaderboardScale) {
  const auto rule = AggregationRule::standard();
  std::string header = "model";
  std::string row = "m";
  for (const auto& n : rule.dimension_names()) {
    header += "," + n;
    row += ",50";
  }
  const auto scores = recompute_leaderboard(parse_leaderboard(header + "\n" + row + "\n"), rule);
  EXPECT_NEAR(scores[0].quality, 50.0, 1e-12);
  EXPECT_NEAR(scores[0].semantic, 50.0, 1e-12);
  EXPECT_NEAR(scores[0].total, 50.0, 1e-12);
}

TEST(EnergyDistance, ZeroForIdenticalAndKnownForPoints) {
  const Array a = Array::from_rows({{0.0, 0.0}, {3.0, 4.0}});
  EXPECT_DOUBLE_EQ(energy_distance(a, a), 0.0);
  const Array p = Array::from_rows({{0.0, 0.0}});
  const Array q = Array::from_rows({{3.0, 4.0}});
  EXPECT_DOUBLE_EQ(energy_distance(p, q), 10.0);
  EXPECT_DOUBLE_EQ(energy_distance(p, q), energy_distance(q, p));
  EXPECT_THROW(energy_distance(p, Array::from_rows({{1.0}})), ShapeError);
}
