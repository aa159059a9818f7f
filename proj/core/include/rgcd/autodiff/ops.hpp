#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rgcd/autodiff/tape.hpp"

// Differentiable primitives. Binary elementwise ops accept equal shapes, a
// single-element operand (scalar broadcast), or an operand whose shape is a
// trailing suffix of the other's (leading-batch broadcast, e.g. a bias row
// added to every row of a matrix). Any other combination is a ShapeError.
namespace rgcd::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var shift(Var a, double offset);
Var neg(Var a);

Var tanh(Var a);
Var square(Var a);
// sqrt(a + offset); offset > 0 keeps the derivative bounded at a = 0.
Var sqrt_shifted(Var a, double offset);

Var sum(Var a);
Var mean(Var a);
// Sums every axis but the first: [R, ...] -> [R].
Var row_sum(Var a);

// [m, k] x [k, n] -> [m, n].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// Rows [begin, end) along axis 0.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// Rows picked by index along axis 0; repeated indices accumulate gradient.
Var gather_rows(Var a, std::vector<std::size_t> indices);
// Rank-2 concatenation along axis 0 or 1.
Var concat(std::span<const Var> parts, std::size_t axis);
Var broadcast_to(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator/(Var a, Var b) { return div(a, b); }

}  // namespace rgcd::ad
