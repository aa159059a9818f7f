#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd {

using ad::Array;

struct LatentShape {
  std::size_t frames = 8;
  std::size_t dim = 4;

  std::size_t flat() const noexcept { return frames * dim; }
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

// One F x D latent sequence.
class LatentSequence {
 public:
  LatentSequence(LatentShape shape, Array values);

  const LatentShape& shape() const noexcept { return shape_; }
  const Array& values() const noexcept { return values_; }  // [F, D]
  Array flat_row() const;                                  // [1, F*D]

  // Row r of a [B, F*D] batch.
  static LatentSequence from_batch(const Array& batch, std::size_t row, LatentShape shape);

 private:
  LatentShape shape_;
  Array values_;
};

// Class index meaning "no prompt" for the teacher.
inline constexpr std::size_t kUnconditional = std::numeric_limits<std::size_t>::max();

// Classes with their embeddings and per-class Gaussian data laws
// z0 ~ N(m_c, s^2 I). The null embedding stands for the empty prompt.
class PromptLibrary {
 public:
  PromptLibrary(LatentShape shape, double spread, std::vector<Array> embeddings,
                std::vector<Array> means, std::vector<std::string> labels = {});

  std::size_t classes() const noexcept { return means_.size(); }
  std::size_t embed_dim() const noexcept { return null_.size(); }
  const LatentShape& latent() const noexcept { return shape_; }
  double spread() const noexcept { return spread_; }

  // kUnconditional maps to the null embedding.
  const Array& embedding(std::size_t c) const;
  const Array& null_embedding() const noexcept { return null_; }
  const Array& mean(std::size_t c) const;  // flat [F*D]
  const std::string& label(std::size_t c) const;

 private:
  LatentShape shape_;
  double spread_;
  std::vector<Array> embeddings_;
  std::vector<Array> means_;
  std::vector<std::string> labels_;
  Array null_;
};

// A concrete prompt: its class and the embedding the student sees.
struct Prompt {
  std::size_t id = 0;
  std::size_t cls = 0;
  Array embedding;
};

}  // namespace rgcd
