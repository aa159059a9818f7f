#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rgcd/dataset.hpp"
#include "rgcd/error.hpp"

using namespace rgcd;

TEST(Dataset, DeterministicPerSeedClassIndex) {
  const auto a = generate_dataset(RunConfig{}, 5);
  const auto b = generate_dataset(RunConfig{}, 5);
  EXPECT_EQ(a.sample(2, 17), b.sample(2, 17));
  EXPECT_NE(a.sample(2, 17), a.sample(2, 18));
  EXPECT_EQ(a.example(3).z0, b.example(3).z0);
  EXPECT_NE(generate_dataset(RunConfig{}, 6).sample(2, 17), a.sample(2, 17));
}

TEST(Dataset, ZeroSpreadReturnsTheMean) {
  RunConfig c;
  c.data.spread = 0.0;
  const auto d = generate_dataset(c, 1);
  for (std::uint64_t i = 0; i < 5; ++i) EXPECT_EQ(d.sample(1, i), d.library().mean(1));
}

TEST(Dataset, PopulationMeanWithinThreeStandardErrors) {
  RunConfig c;
  c.data.spread = 0.5;
  const auto d = generate_dataset(c, 2);
  const std::size_t n = 10000, k = d.library().latent().flat();
  std::vector<double> acc(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Array z = d.sample(0, i);
    for (std::size_t j = 0; j < k; ++j) acc[j] += z[j];
  }
  const double se = 0.5 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < k; ++j) {
    EXPECT_LT(std::abs(acc[j] / n - d.library().mean(0)[j]), 3.0 * se + 1e-12) << j;
  }
}

TEST(Dataset, HeldOutDisjointFromTrain) {
  const auto d = generate_dataset(RunConfig{}, 3);
  std::set<std::size_t> train;
  for (const auto& p : d.train_prompts()) train.insert(p.id);
  for (const auto& p : d.heldout_prompts()) EXPECT_EQ(train.count(p.id), 0u);
  EXPECT_EQ(d.train_prompts().size(), 64u);
  EXPECT_EQ(d.heldout_prompts().size(), 128u);
}

TEST(Dataset, ClassesCycleThroughPrompts) {
  const auto d = generate_dataset(RunConfig{}, 3);
  for (const auto& p : d.heldout_prompts()) EXPECT_EQ(p.cls, p.id % 4);
}

TEST(SmoothMean, ThreeSinusoidsPerCoordinate) {
  // Project each coordinate's frame sequence onto sin/cos of j pi f / F for
  // j = 1..3; the residual must vanish.
  const std::size_t frames = 8, dim = 4;
  const Array m = smooth_mean(frames, dim, 1.0, 11, 2);
  for (std::size_t d = 0; d < dim; ++d) {
    // Least squares on the 6-column basis via normal equations (Gram-Schmidt).
    std::vector<std::vector<double>> basis;
    for (int j = 1; j <= 3; ++j) {
      for (int phase = 0; phase < 2; ++phase) {
        std::vector<double> col(frames);
        for (std::size_t f = 0; f < frames; ++f) {
          const double x = j * M_PI * static_cast<double>(f) / static_cast<double>(frames);
          col[f] = phase ? std::cos(x) : std::sin(x);
        }
        for (const auto& b : basis) {
          double dot = 0.0;
          for (std::size_t f = 0; f < frames; ++f) dot += col[f] * b[f];
          for (std::size_t f = 0; f < frames; ++f) col[f] -= dot * b[f];
        }
        double n = 0.0;
        for (double v : col) n += v * v;
        if (n < 1e-20) continue;
        for (double& v : col) v /= std::sqrt(n);
        basis.push_back(col);
      }
    }
    std::vector<double> r(frames);
    for (std::size_t f = 0; f < frames; ++f) r[f] = m[f * dim + d];
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t f = 0; f < frames; ++f) dot += r[f] * b[f];
      for (std::size_t f = 0; f < frames; ++f) r[f] -= dot * b[f];
    }
    for (double v : r) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(PromptLibrary, NullEmbeddingIsReserved) {
  const LatentShape shape{2, 2};
  EXPECT_THROW(PromptLibrary(shape, 0.1, {Array({4}, 0.0)}, {Array({4}, 1.0)}), DomainError);
  EXPECT_THROW(PromptLibrary(shape, -0.1, {Array({4}, 1.0)}, {Array({4}, 1.0)}), DomainError);
  const PromptLibrary lib(shape, 0.1, {Array({4}, 1.0)}, {Array({4}, 1.0)});
  EXPECT_EQ(lib.embedding(kUnconditional), Array({4}, 0.0));
}
