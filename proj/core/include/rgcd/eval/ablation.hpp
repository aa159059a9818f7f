#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgcd/config.hpp"
#include "rgcd/eval/benchmark.hpp"
#include "rgcd/trainer.hpp"

namespace rgcd::eval {

struct AblationVariant {
  std::string name;
  double beta_img = 0.0;
  double beta_vid = 0.0;
};

// vcm (0, 0), r_img (b_img, 0), r_vid (0, b_vid), combined (b_img, b_vid).
std::vector<AblationVariant> standard_variants(double beta_img, double beta_vid);

struct AblationRun {
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  HeldoutRewards rewards;  // scored with the base weights
  Aggregates aggregates;
  std::vector<double> dimensions;  // normalized, in AblationTable::dimensions order
};

struct AblationRow {
  AblationVariant variant;
  std::vector<AblationRun> runs;

  std::size_t failures() const;
  // Means over successful runs.
  HeldoutRewards mean_rewards() const;
  std::vector<double> mean_dimensions() const;
  Aggregates mean_aggregates() const;
};

struct AblationTable {
  std::vector<std::string> dimensions;
  std::vector<AblationRow> rows;
  RewardWeights scoring;
};

struct AblationOptions {
  std::vector<AblationVariant> variants;  // empty: standard_variants of the base weights
  std::size_t benchmark_prompts = 0;      // 0: eval.prompts
  std::function<void(const AblationVariant&, std::uint64_t seed)> on_run;
};

// Trains every variant for every seed (same seeds across variants) and scores
// the students on held-out prompts. Reward metrics use the base config's
// beta weights for every variant. A failed run is recorded and skipped.
AblationTable ablation_suite(const RunConfig& base, std::span<const std::uint64_t> seeds,
                             const AblationOptions& options = {});

std::string ablation_csv(const AblationTable& table);
std::string ablation_json(const AblationTable& table);

}  // namespace rgcd::eval
