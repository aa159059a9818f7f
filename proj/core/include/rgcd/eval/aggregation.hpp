#pragma once

#include <span>
#include <string>
#include <vector>

namespace rgcd::eval {

// A raw metric value with its normalization bounds.
struct DimensionScore {
  std::string name;
  double raw = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  double normalized = 0.0;  // clamp((raw - lo) / (hi - lo), 0, 1)

  static DimensionScore make(std::string name, double raw, double lo = 0.0, double hi = 1.0);
};

double normalize(double raw, double lo, double hi);

struct WeightedDimension {
  std::string name;
  double weight = 1.0;
};

struct AggregationRule {
  std::vector<WeightedDimension> quality;
  std::vector<WeightedDimension> semantic;
  double quality_blend = 4.0;
  double semantic_blend = 1.0;

  // 7 quality dimensions (dynamic_degree at 0.5) and 9 equally weighted
  // semantic dimensions.
  static AggregationRule standard();
  void validate() const;
  std::vector<std::string> dimension_names() const;  // quality first
  bool is_quality(const std::string& name) const;
  bool is_semantic(const std::string& name) const;
};

// Weighted mean of the normalized quality dimensions. Throws DomainError
// naming the first missing dimension.
double quality_score(std::span<const DimensionScore> scores, const AggregationRule& rule);
// Weighted mean of the normalized semantic dimensions (equal weights by default).
double semantic_score(std::span<const DimensionScore> scores, const AggregationRule& rule);
// (4 Q + S) / 5.
double total_score(double quality, double semantic);
double total_score(double quality, double semantic, const AggregationRule& rule);

}  // namespace rgcd::eval
