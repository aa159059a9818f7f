#include "rgcd/eval/metrics.hpp"

#include <cmath>
#include <limits>

#include "rgcd/error.hpp"

namespace rgcd::eval {

namespace {

struct Frames {
  std::size_t count = 0;
  std::size_t width = 0;
  std::vector<double> v;
  const double* row(std::size_t f) const { return v.data() + f * width; }
};

Frames decoded(const Array& z, const MetricContext& ctx) {
  const Array x = ctx.rewards->codec.decode(z);
  Frames out;
  out.count = x.shape()[0];
  out.width = x.shape()[1];
  out.v.assign(x.values().begin(), x.values().end());
  return out;
}

Frames trajectory(const Prompt& p, const MetricContext& ctx) {
  const Array& t = ctx.rewards->sequence.trajectories.at(p.cls);
  Frames out;
  out.count = t.shape()[0];
  out.width = t.shape()[1];
  out.v.assign(t.values().begin(), t.values().end());
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sq_dist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// (1 + cos) / 2, with 0.5 for a zero vector.
double cos01(const double* a, const double* b, std::size_t n) {
  const double na = std::sqrt(dot(a, a, n)), nb = std::sqrt(dot(b, b, n));
  if (na == 0.0 || nb == 0.0) return 0.5;
  return 0.5 * (1.0 + dot(a, b, n) / (na * nb));
}

std::vector<double> deltas(const Frames& x) {
  std::vector<double> d((x.count - 1) * x.width);
  for (std::size_t f = 0; f + 1 < x.count; ++f) {
    for (std::size_t i = 0; i < x.width; ++i) {
      d[f * x.width + i] = x.row(f + 1)[i] - x.row(f)[i];
    }
  }
  return d;
}

double subject_consistency(const Array& z, const Prompt&, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  double s = 0.0;
  for (std::size_t f = 1; f < x.count; ++f) s += cos01(x.row(f), x.row(f - 1), x.width);
  return s / static_cast<double>(x.count - 1);
}

double background_consistency(const Array& z, const Prompt&, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  double s = 0.0;
  for (std::size_t f = 1; f < x.count; ++f) s += cos01(x.row(f), x.row(0), x.width);
  return s / static_cast<double>(x.count - 1);
}

double temporal_flickering(const Array& z, const Prompt&, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  if (x.count < 3) return 1.0;
  double s = 0.0;
  for (std::size_t f = 1; f + 1 < x.count; ++f) {
    for (std::size_t i = 0; i < x.width; ++i) {
      const double a = x.row(f + 1)[i] - 2.0 * x.row(f)[i] + x.row(f - 1)[i];
      s += a * a;
    }
  }
  s /= static_cast<double>((x.count - 2) * x.width);
  return 1.0 / (1.0 + s);
}

double motion_smoothness(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx), tau = trajectory(p, ctx);
  const auto dx = deltas(x), dt = deltas(tau);
  const double s = sq_dist(dx.data(), dt.data(), dx.size()) / static_cast<double>(dx.size());
  return 1.0 / (1.0 + s);
}

double aesthetic_quality(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  const Array& g = ctx.rewards->frame.targets.at(p.cls);
  double s = 0.0;
  for (std::size_t f = 0; f < x.count; ++f) s += sq_dist(x.row(f), g.values().data(), x.width);
  return std::exp(-s / static_cast<double>(x.count * x.width));
}

// Share of frame transitions that move at least half as far as the class
// trajectory does on average.
double dynamic_degree(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx), tau = trajectory(p, ctx);
  double ref = 0.0;
  for (std::size_t f = 1; f < tau.count; ++f) {
    ref += std::sqrt(sq_dist(tau.row(f), tau.row(f - 1), tau.width));
  }
  ref /= static_cast<double>(tau.count - 1);
  std::size_t moving = 0;
  for (std::size_t f = 1; f < x.count; ++f) {
    if (std::sqrt(sq_dist(x.row(f), x.row(f - 1), x.width)) >= 0.5 * ref) ++moving;
  }
  return static_cast<double>(moving) / static_cast<double>(x.count - 1);
}

double imaging_quality(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Array& m = ctx.library->mean(p.cls);
  const double nz = std::sqrt(dot(z.values().data(), z.values().data(), z.size()));
  const double nm = std::sqrt(dot(m.values().data(), m.values().data(), m.size()));
  if (nm == 0.0) return std::exp(-nz);
  return std::exp(-std::abs(nz / nm - 1.0));
}

double class_distance(const Array& z, const Array& m) {
  return sq_dist(z.values().data(), m.values().data(), z.size()) / static_cast<double>(z.size());
}

double object_class(const Array& z, const Prompt& p, const MetricContext& ctx) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ctx.library->classes(); ++c) {
    const double d = class_distance(z, ctx.library->mean(c));
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best == p.cls ? 1.0 : 0.0;
}

double multiple_objects(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const std::size_t n = ctx.library->classes();
  std::vector<double> logit(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    logit[c] = -class_distance(z, ctx.library->mean(c));
    top = std::max(top, logit[c]);
  }
  double den = 0.0;
  for (double l : logit) den += std::exp(l - top);
  return std::exp(logit[p.cls] - top) / den;
}

double human_action(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Array row = z.reshaped({1, z.size()});
  const std::size_t cls[] = {p.cls};
  const double r = sequence_metric(*ctx.rewards, row, cls)[0];
  return std::exp(r / static_cast<double>(ctx.rewards->codec.pixel_dim()));
}

double color(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  const Array& u = ctx.rewards->frame.directions.at(p.cls);
  double s = 0.0;
  for (std::size_t f = 0; f < x.count; ++f) s += cos01(x.row(f), u.values().data(), x.width);
  return s / static_cast<double>(x.count);
}

// Share of per-frame coordinate orderings that agree with the class mean.
double spatial_relationship(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Array& m = ctx.library->mean(p.cls);
  const std::size_t frames = ctx.library->latent().frames, dim = ctx.library->latent().dim;
  std::size_t agree = 0, total = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = a + 1; b < dim; ++b) {
        const double sz = z[f * dim + a] - z[f * dim + b];
        const double sm = m[f * dim + a] - m[f * dim + b];
        agree += (sz > 0.0) == (sm > 0.0) ? 1 : 0;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 1.0;
}

double scene(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx);
  const Array& g = ctx.rewards->frame.targets.at(p.cls);
  std::vector<double> avg(x.width, 0.0);
  for (std::size_t f = 0; f < x.count; ++f) {
    for (std::size_t i = 0; i < x.width; ++i) avg[i] += x.row(f)[i] / static_cast<double>(x.count);
  }
  return std::exp(-sq_dist(avg.data(), g.values().data(), x.width) / static_cast<double>(x.width));
}

double appearance_style(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx), tau = trajectory(p, ctx);
  return std::exp(-sq_dist(x.row(0), tau.row(0), x.width) / static_cast<double>(x.width));
}

double temporal_style(const Array& z, const Prompt& p, const MetricContext& ctx) {
  const Frames x = decoded(z, ctx), tau = trajectory(p, ctx);
  const auto dx = deltas(x), dt = deltas(tau);
  return cos01(dx.data(), dt.data(), dx.size());
}

double overall_consistency(const Array& z, const Prompt& p, const MetricContext& ctx) {
  return std::exp(-class_distance(z, ctx.library->mean(p.cls)));
}

}  // namespace

std::vector<MetricPlugin> synthetic_plugins() {
  return {
      {"subject_consistency", 0.0, 1.0, subject_consistency},
      {"background_consistency", 0.0, 1.0, background_consistency},
      {"temporal_flickering", 0.0, 1.0, temporal_flickering},
      {"motion_smoothness", 0.0, 1.0, motion_smoothness},
      {"aesthetic_quality", 0.0, 1.0, aesthetic_quality},
      {"dynamic_degree", 0.0, 1.0, dynamic_degree},
      {"imaging_quality", 0.0, 1.0, imaging_quality},
      {"object_class", 0.0, 1.0, object_class},
      {"multiple_objects", 0.0, 1.0, multiple_objects},
      {"human_action", 0.0, 1.0, human_action},
      {"color", 0.0, 1.0, color},
      {"spatial_relationship", 0.0, 1.0, spatial_relationship},
      {"scene", 0.0, 1.0, scene},
      {"appearance_style", 0.0, 1.0, appearance_style},
      {"temporal_style", 0.0, 1.0, temporal_style},
      {"overall_consistency", 0.0, 1.0, overall_consistency},
  };
}

double energy_distance(const Array& x, const Array& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols() || x.rows() == 0 || y.rows() == 0) {
    throw ShapeError("energy distance needs two non-empty [n, K] arrays of equal width, got " +
                     ad::shape_string(x.shape()) + " and " + ad::shape_string(y.shape()));
  }
  const std::size_t k = x.cols();
  auto mean_dist = [k](const Array& a, const Array& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          const double d = a[i * k + c] - b[j * k + c];
          d2 += d * d;
        }
        s += std::sqrt(d2);
      }
    }
    return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

}  // namespace rgcd::eval
