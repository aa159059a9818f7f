#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rgcd/eval/aggregation.hpp"

namespace rgcd::eval {

// Comma-separated table: a header `model,<column>...` and one row per model.
// Values are plain decimals; blank cells are allowed.
struct LeaderboardRow {
  std::string model;
  std::map<std::string, double> values;
};

struct Leaderboard {
  std::vector<std::string> columns;  // without `model`
  std::vector<LeaderboardRow> rows;
};

Leaderboard parse_leaderboard(const std::string& text);
Leaderboard read_leaderboard(const std::filesystem::path& path);

struct LeaderboardScore {
  std::string model;
  double quality = 0.0;
  double semantic = 0.0;
  double total = 0.0;
  std::optional<double> published_total;
};

// Uses quality_score/semantic_score columns when present, otherwise
// aggregates the per-dimension columns with bounds [lo, hi] and maps the
// result back onto that scale. A total_score column is carried along for
// comparison.
std::vector<LeaderboardScore> recompute_leaderboard(const Leaderboard& board,
                                                    const AggregationRule& rule, double lo = 0.0,
                                                    double hi = 100.0);

std::string leaderboard_csv(const std::vector<LeaderboardScore>& scores);

}  // namespace rgcd::eval
