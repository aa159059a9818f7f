#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rgcd/config.hpp"
#include "rgcd/latent.hpp"
#include "rgcd/rewards.hpp"
#include "rgcd/schedule.hpp"

namespace rgcd {

struct Example {
  std::size_t prompt = 0;  // index into train_prompts
  std::size_t cls = 0;
  Array z0;  // [F*D]
};

// Class-conditioned Gaussian sequences z0 ~ N(m_c, s^2 I) with smooth
// per-class means, a disjoint train/held-out prompt split, and the reward
// targets derived from the same means.
class SyntheticDataset {
 public:
  SyntheticDataset(PromptLibrary library, std::vector<Prompt> train, std::vector<Prompt> heldout,
                   RewardSuite rewards, std::uint64_t seed);

  const PromptLibrary& library() const noexcept { return library_; }
  const std::vector<Prompt>& train_prompts() const noexcept { return train_; }
  const std::vector<Prompt>& heldout_prompts() const noexcept { return heldout_; }
  const RewardSuite& rewards() const noexcept { return rewards_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Deterministic in (seed, index): a uniformly chosen train prompt and its sample.
  Example example(std::uint64_t index) const;
  // Deterministic in (seed, class, index).
  Array sample(std::size_t cls, std::uint64_t index) const;

 private:
  PromptLibrary library_;
  std::vector<Prompt> train_;
  std::vector<Prompt> heldout_;
  RewardSuite rewards_;
  std::uint64_t seed_;
};

// Sum of three low-frequency sinusoids per latent coordinate:
// m[f, d] = sum_j a_j sin(j pi f / F + phi_j), a_j ~ N(0, (amp / j)^2).
Array smooth_mean(std::size_t frames, std::size_t dim, double amplitude, std::uint64_t seed,
                  std::size_t cls);

NoiseSchedule make_schedule(const RunConfig& config);
SyntheticDataset generate_dataset(const RunConfig& config, std::uint64_t seed);

}  // namespace rgcd
