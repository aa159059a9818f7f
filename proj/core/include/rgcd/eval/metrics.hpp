#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rgcd/latent.hpp"
#include "rgcd/rewards.hpp"

namespace rgcd::eval {

// What a metric may look at besides the sample itself.
struct MetricContext {
  const PromptLibrary* library = nullptr;
  const RewardSuite* rewards = nullptr;
};

// One benchmark dimension. `score` maps a single sample [F*D] to a raw value;
// it must be safe to call concurrently.
struct MetricPlugin {
  std::string dimension;
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(const Array& sample, const Prompt& prompt, const MetricContext& ctx)> score;
};

// Synthetic stand-ins for the 16 standard dimensions, all raw in [0, 1]
// and larger for samples closer to the prompt's class law.
std::vector<MetricPlugin> synthetic_plugins();

// Energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'| between the row
// populations of two [n, K] arrays (V-statistic).
double energy_distance(const Array& x, const Array& y);

}  // namespace rgcd::eval
