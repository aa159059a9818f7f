#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgcd/eval/aggregation.hpp"
#include "rgcd/eval/metrics.hpp"
#include "rgcd/student.hpp"
#include "rgcd/teacher.hpp"

namespace rgcd::eval {

// Draws one row [F*D] per seed for a prompt, as a [seeds, F*D] batch. Must be
// safe to call concurrently from several threads.
using Sampler = std::function<Array(const Prompt& prompt, std::span<const std::uint64_t> seeds)>;

Sampler teacher_sampler(std::shared_ptr<const Teacher> teacher, double omega, std::size_t steps);
Sampler student_sampler(std::shared_ptr<const ConsistencyStudent> student, double omega,
                        std::size_t steps);

// Seed of sample `s` for a prompt; shared by every sampler so paired runs see
// the same start noise.
std::uint64_t sample_seed(std::uint64_t seed, const Prompt& prompt, std::size_t s);

struct BenchmarkOptions {
  std::size_t samples_per_prompt = 5;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct DimensionResult {
  std::string name;
  std::string group;  // quality, semantic or extra
  std::size_t count = 0;
  double raw_mean = 0.0;
  double std_error = 0.0;
  DimensionScore score;
  std::optional<std::string> error;  // set when the plugin failed
};

struct PromptResult {
  std::size_t prompt = 0;
  std::size_t cls = 0;
  std::vector<double> raw;  // per dimension, NaN where the plugin failed
};

struct Aggregates {
  std::optional<double> quality;
  std::optional<double> semantic;
  std::optional<double> total;
};

struct QuestionTally {
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;

  std::size_t total() const noexcept { return wins + ties + losses; }
  double win_rate() const;
  double tie_rate() const;
  double loss_rate() const;
  friend bool operator==(const QuestionTally&, const QuestionTally&) = default;
};

inline constexpr std::array<const char*, 3> kQuestions = {"visual_appeal", "text_fit", "overall"};

struct PairwiseTable {
  std::string label_a;
  std::string label_b;
  std::string judge;
  std::array<QuestionTally, 3> questions;
};

struct BenchmarkReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<DimensionResult> dimensions;
  std::vector<PromptResult> prompts;
  Aggregates aggregates;
  std::vector<PairwiseTable> pairwise;
};

// Samples every prompt `samples_per_prompt` times and scores each sample on
// every plugin. A throwing plugin marks only its own dimension as failed.
BenchmarkReport run_benchmark(const Sampler& sampler, std::span<const Prompt> prompts,
                              std::span<const MetricPlugin> plugins, const AggregationRule& rule,
                              const MetricContext& context, const BenchmarkOptions& options);

// Quality/semantic/total from the stored dimension scores; empty where a
// needed dimension failed or is absent.
Aggregates recompute_aggregates(std::span<const DimensionResult> dimensions,
                                const AggregationRule& rule);

// Three scoring functions, one per question, and the tie threshold.
struct PairwiseJudge {
  std::string name;
  std::array<std::function<double(const Array& sample, const Prompt& prompt)>, 3> questions;
  double delta = 1e-6;
};

// Q1 frame reward, Q2 sequence reward, Q3 the weighted blend under `overall`.
PairwiseJudge reward_judge(const RewardSuite& suite, const RewardWeights& overall, double delta);

struct PairwiseOptions {
  std::size_t samples_per_prompt = 1;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

// Per prompt and question: A wins if mean judge(A) - mean judge(B) > delta,
// loses if < -delta, ties otherwise.
PairwiseTable pairwise_compare(const Sampler& a, const Sampler& b, std::span<const Prompt> prompts,
                               const PairwiseJudge& judge, const PairwiseOptions& options,
                               std::string label_a = "A", std::string label_b = "B");

std::string report_json(const BenchmarkReport& report);
// Flat summary: section,name,field,value.
std::string report_csv(const BenchmarkReport& report);
std::string pairwise_csv(const PairwiseTable& table);
void write_report(const std::filesystem::path& stem, const BenchmarkReport& report);

}  // namespace rgcd::eval
