#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rgcd::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. A rank-0 array (empty shape) holds one
// scalar.
class Array {
 public:
  Array() : data_(1, 0.0) {}
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> values);

  static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Array vector(std::vector<double> values);
  static Array identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;  // extent of axis 0 (1 for scalars)
  std::size_t cols() const;  // product of the remaining extents

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const noexcept;
  Array reshaped(Shape shape) const;

  friend bool operator==(const Array& a, const Array& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Array& a, const Array& b);
double l2_norm(std::span<const double> v);

}  // namespace rgcd::ad
