#include "rgcd/autodiff/array.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "rgcd/error.hpp"

namespace rgcd::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("array extents must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " holds " + std::to_string(numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> v;
  std::size_t width = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != width) throw ShapeError("ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Array(Shape{rows.size(), width}, std::move(v));
}

Array Array::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Array(std::move(s), std::move(values));
}

Array Array::identity(std::size_t n) {
  Array a(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) a.at(i, i) = 1.0;
  return a;
}

std::size_t Array::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Array::cols() const { return shape_.empty() ? 1 : data_.size() / shape_[0]; }

double Array::item() const {
  if (data_.size() != 1) throw ShapeError("item() on array of shape " + shape_string(shape_));
  return data_[0];
}

bool Array::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Array Array::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Array(std::move(shape), data_);
}

double max_abs_diff(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace rgcd::ad
