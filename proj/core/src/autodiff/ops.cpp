#include "rgcd/autodiff/ops.hpp"

#include <cmath>

#include "rgcd/error.hpp"

namespace rgcd::ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("op on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw Error("operands live on different tapes");
  return t;
}

// Gradient slot of a parent, or nullptr when the parent is not differentiated.
double* slot(Tape& t, std::size_t id) {
  if (!t.requires_grad(id)) return nullptr;
  return t.grad_slot(id).values().data();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() >= big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op, or a ShapeError naming both.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (numel(b) == 1 && b.size() <= a.size()) return a;
  if (numel(a) == 1 && a.size() <= b.size()) return b;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                   shape_string(b));
}

template <class Fwd, class DA, class DB>
Var binary(OpKind kind, Var a, Var b, Fwd fwd, DA da, DB db) {
  Tape& t = tape_of(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Shape out_shape = broadcast_shape(op_name(kind), av.shape(), bv.shape());
  Array out(out_shape);
  const std::size_t n = out.size(), na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(kind, {ia, ib}, std::move(out), [ia, ib, n, na, nb, da, db](Tape& tp, const Array& g) {
    const Array& x = tp.value(ia);
    const Array& y = tp.value(ib);
    if (double* ga = slot(tp, ia)) {
      for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * da(x[i % na], y[i % nb]);
    }
    if (double* gb = slot(tp, ib)) {
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * db(x[i % na], y[i % nb]);
    }
  });
}

template <class Fwd, class Deriv>
Var unary(OpKind kind, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.id();
  const std::size_t out_id = t.size();
  return t.push(kind, {ia}, std::move(out), [ia, out_id, deriv](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    const Array& x = tp.value(ia);
    const Array& y = tp.value(out_id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      OpKind::add, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      OpKind::sub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      OpKind::mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      OpKind::div, a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var scale(Var a, double factor) {
  return unary(
      OpKind::scale, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var shift(Var a, double offset) {
  return unary(
      OpKind::shift, a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  return unary(
      OpKind::tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(
      OpKind::square, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var sqrt_shifted(Var a, double offset) {
  if (!(offset > 0.0)) throw DomainError("sqrt_shifted needs a positive offset");
  for (double v : a.value().values()) {
    if (v + offset <= 0.0) throw DomainError("sqrt_shifted: argument below -offset");
  }
  return unary(
      OpKind::sqrt_shifted, a, [offset](double x) { return std::sqrt(x + offset); },
      [](double, double y) { return 0.5 / y; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return t.push(OpKind::sum, {ia}, Array::scalar(s), [ia](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    const std::size_t n = tp.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const std::size_t n = a.value().size();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return t.push(OpKind::mean, {ia}, Array::scalar(s / static_cast<double>(n)),
                [ia, n](Tape& tp, const Array& g) {
                  double* ga = slot(tp, ia);
                  if (!ga) return;
                  const double w = g[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i) ga[i] += w;
                });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Array& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Array out(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j];
    out[i] = s;
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::row_sum, {ia}, std::move(out), [ia, r, c](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  Array out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib, m, k, n](Tape& tp, const Array& g) {
    const Array& x = tp.value(ia);
    const Array& y = tp.value(ib);
    if (double* ga = slot(tp, ia)) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = slot(tp, ib)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * g[i * n + j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Array& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose needs rank 2, got " + shape_string(av.shape()));
  const std::size_t r = av.shape()[0], c = av.shape()[1];
  Array out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::transpose, {ia}, std::move(out), [ia, r, c](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Array out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return t.push(OpKind::reshape, {ia}, std::move(out), [ia](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Array& av = a.value();
  if (av.rank() == 0 || begin >= end || end > av.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_string(av.shape()));
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  Tape& t = tape_of(a);
  const std::size_t c = av.cols();
  Shape s = av.shape();
  s[0] = end - begin;
  Array out(s, std::vector<double>(av.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                   av.values().begin() + static_cast<std::ptrdiff_t>(end * c)));
  const std::size_t ia = a.id();
  return t.push(OpKind::slice, {ia}, std::move(out), [ia, begin, c](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  const Array& av = a.value();
  if (av.rank() == 0 || indices.empty()) {
    throw ShapeError("gather_rows on " + shape_string(av.shape()));
  }
  for (auto i : indices) {
    if (i >= av.rows()) {
      throw ShapeError("gather_rows index " + std::to_string(i) + " out of " +
                       shape_string(av.shape()));
    }
  }
  Tape& t = tape_of(a);
  const std::size_t c = av.cols();
  Shape s = av.shape();
  s[0] = indices.size();
  Array out(s);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = av[indices[r] * c + j];
  }
  const std::size_t ia = a.id();
  return t.push(OpKind::gather, {ia}, std::move(out),
                [ia, c, idx = std::move(indices)](Tape& tp, const Array& g) {
                  double* ga = slot(tp, ia);
                  if (!ga) return;
                  for (std::size_t r = 0; r < idx.size(); ++r) {
                    for (std::size_t j = 0; j < c; ++j) ga[idx[r] * c + j] += g[r * c + j];
                  }
                });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  if (axis > 1) throw ShapeError("concat supports axis 0 or 1");
  Tape& t = tape_of(parts[0]);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  const Shape& s0 = parts[0].value().shape();
  if (s0.size() != 2) throw ShapeError("concat needs rank-2 parts, got " + shape_string(s0));
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw Error("concat operands live on different tapes");
    const Shape& s = p.value().shape();
    if (s.size() != 2 || s[1 - axis] != s0[1 - axis]) {
      throw ShapeError("concat axis " + std::to_string(axis) + ": " + shape_string(s0) + " vs " +
                       shape_string(s));
    }
    ids.push_back(p.id());
    widths.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t rows = axis == 0 ? total : s0[0];
  const std::size_t cols = axis == 0 ? s0[1] : total;
  Array out(Shape{rows, cols});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& v = parts[k].value();
    const std::size_t w = widths[k];
    if (axis == 0) {
      std::copy(v.values().begin(), v.values().end(), out.values().begin() + offset * cols);
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) out[r * cols + offset + j] = v[r * w + j];
      }
    }
    offset += w;
  }
  return t.push(OpKind::concat, ids, std::move(out),
                [ids, widths, axis, rows, cols](Tape& tp, const Array& g) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    const std::size_t w = widths[k];
                    if (double* gp = slot(tp, ids[k])) {
                      if (axis == 0) {
                        for (std::size_t i = 0; i < w * cols; ++i) gp[i] += g[off * cols + i];
                      } else {
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * cols + off + j];
                        }
                      }
                    }
                    off += w;
                  }
                });
}

Var broadcast_to(Var a, Shape shape) {
  const Shape& s = a.value().shape();
  if (broadcast_shape("broadcast", shape, s) != shape) {
    throw ShapeError("broadcast: cannot expand " + shape_string(s) + " to " + shape_string(shape));
  }
  Tape& t = tape_of(a);
  const Array& av = a.value();
  Array out(shape);
  const std::size_t n = out.size(), na = av.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na];
  const std::size_t ia = a.id();
  return t.push(OpKind::broadcast, {ia}, std::move(out), [ia, n, na](Tape& tp, const Array& g) {
    double* ga = slot(tp, ia);
    if (!ga) return;
    for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i];
  });
}

}  // namespace rgcd::ad
