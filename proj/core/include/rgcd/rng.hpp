#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd {

// Purposes that key independent random streams. Adding a new purpose never
// shifts the draws of an existing one.
enum class Stream : std::uint64_t {
  data = 1,
  diffusion_noise = 2,
  timestep = 3,
  guidance = 4,
  frames = 5,
  init = 6,
  sample = 7,
  probe = 8,
  eval = 9,
  prompt = 10,
  teacher_train = 11,
  library = 12,
  gradcheck = 13,
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t stream_key(std::uint64_t seed, Stream purpose, std::uint64_t step,
                         std::uint64_t sub = 0);

// Generator for one (seed, purpose, step, sub) stream.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, Stream purpose, std::uint64_t step, std::uint64_t sub = 0)
      : engine_(stream_key(seed, purpose, step, sub)) {}

  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }
  // Uniform integer in [lo, hi].
  std::size_t index(std::size_t lo, std::size_t hi);
  ad::Array normal_array(ad::Shape shape, double stddev = 1.0);
  // `count` distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rgcd
