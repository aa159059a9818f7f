#include "rgcd/rewards.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace rgcd {

namespace {

Array transposed(const Array& a) {
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Array t({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = a.at(i, j);
  }
  return t;
}

Array apply_rows(const Array& rows, std::size_t in, const Array& m) {
  // rows: n frames of width `in`; m: [out, in]
  const std::size_t out = m.shape()[0];
  const std::size_t n = rows.size() / in;
  Array y({n, out});
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += m.at(o, i) * rows[f * in + i];
      y.at(f, o) = acc;
    }
  }
  return y;
}

}  // namespace

const char* codec_name(CodecKind kind) { return kind == CodecKind::identity ? "identity" : "linear"; }

CodecKind parse_codec(const std::string& name) {
  if (name == "identity") return CodecKind::identity;
  if (name == "linear") return CodecKind::linear;
  throw DomainError("unknown codec '" + name + "' (expected identity or linear)");
}

Codec::Codec(CodecKind kind, std::size_t d, std::size_t p, Array decode, Array encode)
    : kind_(kind),
      latent_dim_(d),
      pixel_dim_(p),
      decode_(std::move(decode)),
      encode_(std::move(encode)),
      decode_t_(transposed(decode_)) {}

Codec Codec::identity(std::size_t dim) {
  return Codec(CodecKind::identity, dim, dim, Array::identity(dim), Array::identity(dim));
}

Codec Codec::linear(std::size_t dim, std::size_t pixels, std::uint64_t seed) {
  StreamRng rng(seed, Stream::library, 0, 7);
  return from_matrix(rng.normal_array({pixels, dim}, 1.0 / std::sqrt(static_cast<double>(dim))));
}

Codec Codec::from_matrix(Array decode_matrix) {
  if (decode_matrix.rank() != 2) throw ShapeError("decode matrix must be rank 2");
  const std::size_t p = decode_matrix.shape()[0];
  const std::size_t d = decode_matrix.shape()[1];
  if (p < d) throw DomainError("decode matrix must be left-invertible (P >= D)");
  Eigen::MatrixXd m(p, d);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = decode_matrix.at(i, j);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m);
  if (cod.rank() < static_cast<Eigen::Index>(d)) {
    throw DomainError("decode matrix is rank deficient");
  }
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  Array enc({d, p});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < p; ++j) enc.at(i, j) = pinv(i, j);
  }
  return Codec(CodecKind::linear, d, p, std::move(decode_matrix), std::move(enc));
}

Array Codec::decode(const Array& z) const {
  if (z.size() % latent_dim_ != 0) {
    throw ShapeError("decode: " + ad::shape_string(z.shape()) + " is not a stack of width-" +
                     std::to_string(latent_dim_) + " frames");
  }
  if (kind_ == CodecKind::identity) return z.reshaped({z.size() / latent_dim_, latent_dim_});
  return apply_rows(z, latent_dim_, decode_);
}

Array Codec::encode(const Array& x) const {
  if (x.size() % pixel_dim_ != 0) {
    throw ShapeError("encode: " + ad::shape_string(x.shape()) + " is not a stack of width-" +
                     std::to_string(pixel_dim_) + " frames");
  }
  if (kind_ == CodecKind::identity) return x.reshaped({x.size() / pixel_dim_, pixel_dim_});
  return apply_rows(x, pixel_dim_, encode_);
}

ad::Var Codec::decode(ad::Tape& tape, ad::Var z) const {
  const std::size_t n = z.value().size();
  if (n % latent_dim_ != 0) throw ShapeError("decode: latent width mismatch");
  ad::Var frames = ad::reshape(z, {n / latent_dim_, latent_dim_});
  if (kind_ == CodecKind::identity) return frames;
  return ad::matmul(frames, tape.constant(decode_t_));
}

const char* frame_reward_name(FrameRewardKind kind) {
  return kind == FrameRewardKind::neg_sq_distance ? "neg_sq_distance" : "cosine";
}

FrameRewardKind parse_frame_reward(const std::string& name) {
  if (name == "neg_sq_distance") return FrameRewardKind::neg_sq_distance;
  if (name == "cosine") return FrameRewardKind::cosine;
  throw DomainError("unknown frame reward '" + name + "' (expected neg_sq_distance or cosine)");
}

void RewardSuite::validate() const {
  const std::size_t p = codec.pixel_dim();
  if (codec.latent_dim() != latent.dim) throw ShapeError("codec latent width differs from D");
  if (latent.frames < 2) throw DomainError("sequence reward needs F >= 2");
  if (weights.frames_sampled < 1 || weights.frames_sampled > latent.frames) {
    throw DomainError("frame sample count M must lie in [1, F]");
  }
  if (!(weights.beta_img >= 0.0 && weights.beta_vid >= 0.0)) {
    throw DomainError("reward weights must be >= 0");
  }
  if (!(sequence.velocity_weight > 0.0)) throw DomainError("velocity weight must be > 0");
  if (frame.targets.size() != classes() || frame.directions.size() != classes()) {
    throw ShapeError("one frame target and direction per class required");
  }
  for (std::size_t c = 0; c < classes(); ++c) {
    if (frame.targets[c].size() != p || frame.directions[c].size() != p ||
        sequence.trajectories[c].size() != latent.frames * p) {
      throw ShapeError("reward targets of class " + std::to_string(c) + " have the wrong width");
    }
  }
}

std::vector<std::size_t> sample_frames(StreamRng& rng, std::size_t batch, std::size_t frames,
                                       std::size_t m) {
  if (m > frames) {
    throw DomainError("cannot sample M = " + std::to_string(m) + " of F = " +
                      std::to_string(frames) + " frames");
  }
  std::vector<std::size_t> out;
  out.reserve(batch * m);
  for (std::size_t b = 0; b < batch; ++b) {
    auto pick = rng.sample_without_replacement(frames, m);
    out.insert(out.end(), pick.begin(), pick.end());
  }
  return out;
}

namespace {

std::size_t batch_of(const RewardSuite& suite, ad::Var z0, std::size_t classes) {
  const auto& v = z0.value();
  if (v.rank() != 2 || v.cols() != suite.latent.flat()) {
    throw ShapeError("reward input " + ad::shape_string(v.shape()) + " is not [B, F*D]");
  }
  if (classes != v.rows()) throw ShapeError("one class per reward row required");
  return v.rows();
}

const Array& checked(const std::vector<Array>& v, std::size_t c) {
  if (c >= v.size()) throw DomainError("reward class " + std::to_string(c) + " out of range");
  return v[c];
}

}  // namespace

ad::Var frame_reward_rows(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
                          std::span<const std::size_t> classes, std::span<const std::size_t> frames,
                          std::size_t m) {
  const std::size_t b = batch_of(suite, z0, classes.size());
  const std::size_t f = suite.latent.frames;
  const std::size_t p = suite.codec.pixel_dim();
  if (m < 1 || m > f) throw DomainError("frame sample count M must lie in [1, F]");
  if (frames.size() != b * m) throw ShapeError("frame sample must hold M indices per example");
  std::vector<std::size_t> rows(b * m);
  const bool distance = suite.frame.kind == FrameRewardKind::neg_sq_distance;
  Array ref({b * m, p});
  for (std::size_t i = 0; i < b; ++i) {
    const Array& target = distance ? checked(suite.frame.targets, classes[i])
                                   : checked(suite.frame.directions, classes[i]);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t fr = frames[i * m + j];
      if (fr >= f) throw DomainError("frame index out of range");
      rows[i * m + j] = i * f + fr;
      std::copy_n(target.values().data(), p, ref.values().data() + (i * m + j) * p);
    }
  }
  ad::Var x = ad::gather_rows(suite.codec.decode(tape, z0), std::move(rows));
  ad::Var r = tape.constant(std::move(ref));
  if (distance) {
    ad::Var sq = ad::square(ad::sub(x, r));
    return ad::neg(ad::row_sum(ad::reshape(sq, {b, m * p})));
  }
  ad::Var num = ad::row_sum(ad::mul(x, r));
  ad::Var den = ad::sqrt_shifted(ad::row_sum(ad::square(x)), suite.frame.eta);
  return ad::row_sum(ad::reshape(ad::div(num, den), {b, m}));
}

ad::Var sequence_reward_rows(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
                             std::span<const std::size_t> classes) {
  const std::size_t b = batch_of(suite, z0, classes.size());
  const std::size_t f = suite.latent.frames;
  const std::size_t p = suite.codec.pixel_dim();
  if (f < 2) throw DomainError("sequence reward needs F >= 2");
  Array tau({b * f, p});
  Array dtau({b * (f - 1), p});
  std::vector<std::size_t> next, prev;
  for (std::size_t i = 0; i < b; ++i) {
    const Array& tr = checked(suite.sequence.trajectories, classes[i]);
    std::copy_n(tr.values().data(), f * p, tau.values().data() + i * f * p);
    for (std::size_t j = 0; j + 1 < f; ++j) {
      next.push_back(i * f + j + 1);
      prev.push_back(i * f + j);
      for (std::size_t q = 0; q < p; ++q) {
        dtau[(i * (f - 1) + j) * p + q] = tr[(j + 1) * p + q] - tr[j * p + q];
      }
    }
  }
  ad::Var x = suite.codec.decode(tape, z0);
  ad::Var track = ad::row_sum(ad::reshape(ad::square(ad::sub(x, tape.constant(std::move(tau)))),
                                          {b, f * p}));
  ad::Var dx = ad::sub(ad::gather_rows(x, std::move(next)), ad::gather_rows(x, std::move(prev)));
  ad::Var vel = ad::row_sum(ad::reshape(ad::square(ad::sub(dx, tape.constant(std::move(dtau)))),
                                        {b, (f - 1) * p}));
  const double fd = static_cast<double>(f);
  return ad::neg(ad::add(ad::scale(track, 1.0 / fd),
                         ad::scale(vel, suite.sequence.velocity_weight / (fd - 1.0))));
}

ad::Var j_img(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
              std::span<const std::size_t> classes, std::span<const std::size_t> frames,
              std::size_t m) {
  return ad::mean(frame_reward_rows(tape, suite, z0, classes, frames, m));
}

ad::Var j_vid(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
              std::span<const std::size_t> classes) {
  return ad::mean(sequence_reward_rows(tape, suite, z0, classes));
}

std::vector<double> frame_metric(const RewardSuite& suite, const Array& z0,
                                 std::span<const std::size_t> classes) {
  ad::Tape tape;
  ad::Var z = tape.constant(z0);
  const std::size_t f = suite.latent.frames;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < z0.rows(); ++i) {
    for (std::size_t j = 0; j < f; ++j) all.push_back(j);
  }
  const Array& r = frame_reward_rows(tape, suite, z, classes, all, f).value();
  const double w = static_cast<double>(suite.weights.frames_sampled) / static_cast<double>(f);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = w * r[i];
  return out;
}

std::vector<double> sequence_metric(const RewardSuite& suite, const Array& z0,
                                    std::span<const std::size_t> classes) {
  ad::Tape tape;
  const Array& r = sequence_reward_rows(tape, suite, tape.constant(z0), classes).value();
  return std::vector<double>(r.values().begin(), r.values().end());
}

std::vector<double> combined_metric(const RewardSuite& suite, const Array& z0,
                                    std::span<const std::size_t> classes) {
  auto a = frame_metric(suite, z0, classes);
  const auto b = sequence_metric(suite, z0, classes);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = suite.weights.beta_img * a[i] + suite.weights.beta_vid * b[i];
  }
  return a;
}

}  // namespace rgcd
