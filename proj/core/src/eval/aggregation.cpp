#include "rgcd/eval/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rgcd/error.hpp"

namespace rgcd::eval {

double normalize(double raw, double lo, double hi) {
  if (!(hi > lo)) throw DomainError("normalization bounds need hi > lo");
  if (std::isnan(raw)) throw NumericError("cannot normalize NaN");
  return std::clamp((raw - lo) / (hi - lo), 0.0, 1.0);
}

DimensionScore DimensionScore::make(std::string name, double raw, double lo, double hi) {
  const double n = normalize(raw, lo, hi);
  return DimensionScore{std::move(name), raw, lo, hi, n};
}

AggregationRule AggregationRule::standard() {
  AggregationRule r;
  r.quality = {{"subject_consistency", 1.0}, {"background_consistency", 1.0},
               {"temporal_flickering", 1.0}, {"motion_smoothness", 1.0},
               {"aesthetic_quality", 1.0},   {"dynamic_degree", 0.5},
               {"imaging_quality", 1.0}};
  for (const char* n : {"object_class", "multiple_objects", "human_action", "color",
                        "spatial_relationship", "scene", "appearance_style", "temporal_style",
                        "overall_consistency"}) {
    r.semantic.push_back({n, 1.0});
  }
  return r;
}

void AggregationRule::validate() const {
  std::vector<std::string> errs;
  std::set<std::string> seen;
  auto check = [&](const std::vector<WeightedDimension>& dims, const char* group) {
    if (dims.empty()) errs.push_back(std::string(group) + " dimension list is empty");
    for (const auto& d : dims) {
      if (!(d.weight > 0.0) || !std::isfinite(d.weight)) {
        errs.push_back("weight of '" + d.name + "' must be positive");
      }
      if (!seen.insert(d.name).second) errs.push_back("dimension '" + d.name + "' listed twice");
    }
  };
  check(quality, "quality");
  check(semantic, "semantic");
  if (!(quality_blend >= 0.0) || !(semantic_blend >= 0.0) || quality_blend + semantic_blend <= 0.0) {
    errs.push_back("blend weights must be non-negative with a positive sum");
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

std::vector<std::string> AggregationRule::dimension_names() const {
  std::vector<std::string> out;
  for (const auto& d : quality) out.push_back(d.name);
  for (const auto& d : semantic) out.push_back(d.name);
  return out;
}

bool AggregationRule::is_quality(const std::string& name) const {
  return std::any_of(quality.begin(), quality.end(), [&](const auto& d) { return d.name == name; });
}

bool AggregationRule::is_semantic(const std::string& name) const {
  return std::any_of(semantic.begin(), semantic.end(), [&](const auto& d) { return d.name == name; });
}

namespace {

double weighted(std::span<const DimensionScore> scores, const std::vector<WeightedDimension>& dims,
                const char* group) {
  double num = 0.0, den = 0.0;
  for (const auto& d : dims) {
    const auto it = std::find_if(scores.begin(), scores.end(),
                                 [&](const DimensionScore& s) { return s.name == d.name; });
    if (it == scores.end()) {
      throw DomainError(std::string("missing ") + group + " dimension '" + d.name + "'");
    }
    num += d.weight * it->normalized;
    den += d.weight;
  }
  return num / den;
}

}  // namespace

double quality_score(std::span<const DimensionScore> scores, const AggregationRule& rule) {
  return weighted(scores, rule.quality, "quality");
}

double semantic_score(std::span<const DimensionScore> scores, const AggregationRule& rule) {
  return weighted(scores, rule.semantic, "semantic");
}

double total_score(double quality, double semantic) { return (4.0 * quality + semantic) / 5.0; }

double total_score(double quality, double semantic, const AggregationRule& rule) {
  return (rule.quality_blend * quality + rule.semantic_blend * semantic) /
         (rule.quality_blend + rule.semantic_blend);
}

}  // namespace rgcd::eval
