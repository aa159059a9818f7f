#include "rgcd/latent.hpp"

#include <algorithm>
#include <cmath>

#include "rgcd/error.hpp"

namespace rgcd {

LatentSequence::LatentSequence(LatentShape shape, Array values) : shape_(shape) {
  if (shape.frames < 1 || shape.dim < 1) throw ShapeError("latent sequence needs F >= 1 and D >= 1");
  if (values.size() != shape.flat()) {
    throw ShapeError("latent sequence of " + std::to_string(shape.frames) + "x" +
                     std::to_string(shape.dim) + " given " + std::to_string(values.size()) + " values");
  }
  if (!values.all_finite()) throw NumericError("latent sequence holds non-finite values");
  values_ = values.reshaped({shape.frames, shape.dim});
}

Array LatentSequence::flat_row() const { return values_.reshaped({1, shape_.flat()}); }

LatentSequence LatentSequence::from_batch(const Array& batch, std::size_t row, LatentShape shape) {
  if (batch.rank() != 2 || batch.cols() != shape.flat() || row >= batch.rows()) {
    throw ShapeError("cannot take row " + std::to_string(row) + " of " +
                     ad::shape_string(batch.shape()) + " as a latent sequence");
  }
  const auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(row * shape.flat());
  std::vector<double> v(first, first + static_cast<std::ptrdiff_t>(shape.flat()));
  return LatentSequence(shape, Array({shape.flat()}, std::move(v)));
}

PromptLibrary::PromptLibrary(LatentShape shape, double spread, std::vector<Array> embeddings,
                             std::vector<Array> means, std::vector<std::string> labels)
    : shape_(shape),
      spread_(spread),
      embeddings_(std::move(embeddings)),
      means_(std::move(means)),
      labels_(std::move(labels)) {
  if (means_.empty()) throw DomainError("prompt library needs at least one class");
  if (embeddings_.size() != means_.size()) throw ShapeError("one embedding per class required");
  if (!(spread_ >= 0.0) || !std::isfinite(spread_)) throw DomainError("spread must be finite and >= 0");
  const std::size_t dc = embeddings_.front().size();
  null_ = Array({dc}, 0.0);
  for (std::size_t c = 0; c < means_.size(); ++c) {
    if (embeddings_[c].size() != dc) throw ShapeError("class embeddings differ in width");
    if (means_[c].size() != shape_.flat()) throw ShapeError("class mean does not match F x D");
    embeddings_[c] = embeddings_[c].reshaped({dc});
    means_[c] = means_[c].reshaped({shape_.flat()});
    if (embeddings_[c] == null_) {
      throw DomainError("class " + std::to_string(c) + " embedding equals the null embedding");
    }
  }
  if (labels_.empty()) {
    for (std::size_t c = 0; c < means_.size(); ++c) labels_.push_back("class-" + std::to_string(c));
  }
  if (labels_.size() != means_.size()) throw ShapeError("one label per class required");
}

const Array& PromptLibrary::embedding(std::size_t c) const {
  if (c == kUnconditional) return null_;
  if (c >= embeddings_.size()) throw DomainError("class " + std::to_string(c) + " out of range");
  return embeddings_[c];
}

const Array& PromptLibrary::mean(std::size_t c) const {
  if (c >= means_.size()) throw DomainError("class " + std::to_string(c) + " out of range");
  return means_[c];
}

const std::string& PromptLibrary::label(std::size_t c) const {
  if (c >= labels_.size()) throw DomainError("class " + std::to_string(c) + " out of range");
  return labels_[c];
}

}  // namespace rgcd
