#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rgcd/autodiff/tape.hpp"
#include "rgcd/latent.hpp"

namespace rgcd {

class StreamRng;

enum class CodecKind { identity, linear };
const char* codec_name(CodecKind kind);
CodecKind parse_codec(const std::string& name);

// Per-frame map between latent frames (width D) and pixel frames (width P).
class Codec {
 public:
  static Codec identity(std::size_t dim);
  // Decode matrix P x D with N(0, 1/D) entries; encode is its pseudo-inverse.
  static Codec linear(std::size_t dim, std::size_t pixels, std::uint64_t seed);
  static Codec from_matrix(Array decode_matrix);

  CodecKind kind() const noexcept { return kind_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t pixel_dim() const noexcept { return pixel_dim_; }
  const Array& decode_matrix() const noexcept { return decode_; }  // [P, D]
  const Array& encode_matrix() const noexcept { return encode_; }  // [D, P]

  // Rows of D-wide frames (any leading shape whose size is a multiple of D)
  // to [frames, P].
  Array decode(const Array& z) const;
  Array encode(const Array& x) const;
  // [B, F*D] -> [B*F, P].
  ad::Var decode(ad::Tape& tape, ad::Var z) const;

 private:
  Codec(CodecKind kind, std::size_t d, std::size_t p, Array decode, Array encode);

  CodecKind kind_;
  std::size_t latent_dim_;
  std::size_t pixel_dim_;
  Array decode_;
  Array encode_;
  Array decode_t_;
};

enum class FrameRewardKind { neg_sq_distance, cosine };
const char* frame_reward_name(FrameRewardKind kind);
FrameRewardKind parse_frame_reward(const std::string& name);

// Per-frame reward toward a class target g(c), or cosine-like alignment with
// direction u(c): x.u / sqrt(|x|^2 + eta).
struct FrameReward {
  FrameRewardKind kind = FrameRewardKind::neg_sq_distance;
  std::vector<Array> targets;     // g(c), [P]
  std::vector<Array> directions;  // u(c), unit [P]
  double eta = 1e-6;
};

// Tracking of a class trajectory tau_c with a velocity term:
// R = -(1/F) sum_f |x_f - tau_f|^2 - lambda/(F-1) sum_f |dx_f - dtau_f|^2.
struct SequenceReward {
  std::vector<Array> trajectories;  // tau_c, [F, P]
  double velocity_weight = 0.5;
};

struct RewardWeights {
  double beta_img = 1.0;
  double beta_vid = 2.0;
  std::size_t frames_sampled = 6;  // M
};

struct RewardSuite {
  LatentShape latent;
  Codec codec = Codec::identity(4);
  FrameReward frame;
  SequenceReward sequence;
  RewardWeights weights;

  std::size_t classes() const noexcept { return sequence.trajectories.size(); }
  void validate() const;
};

// M frames per example without replacement, flattened [B*M].
std::vector<std::size_t> sample_frames(StreamRng& rng, std::size_t batch, std::size_t frames,
                                       std::size_t m);

// Per-example sum of R_img over the listed frames ([B]); `frames` holds
// M indices per example.
ad::Var frame_reward_rows(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
                          std::span<const std::size_t> classes, std::span<const std::size_t> frames,
                          std::size_t m);
// Per-example R_vid ([B]).
ad::Var sequence_reward_rows(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
                             std::span<const std::size_t> classes);

// Batch means of the two objectives.
ad::Var j_img(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
              std::span<const std::size_t> classes, std::span<const std::size_t> frames,
              std::size_t m);
ad::Var j_vid(ad::Tape& tape, const RewardSuite& suite, ad::Var z0,
              std::span<const std::size_t> classes);

// Plain evaluations per row of a [B, F*D] batch. The frame metric is the
// expectation of j_img over the frame draw: (M/F) sum_f R_img(x_f).
std::vector<double> frame_metric(const RewardSuite& suite, const Array& z0,
                                 std::span<const std::size_t> classes);
std::vector<double> sequence_metric(const RewardSuite& suite, const Array& z0,
                                    std::span<const std::size_t> classes);
std::vector<double> combined_metric(const RewardSuite& suite, const Array& z0,
                                    std::span<const std::size_t> classes);

}  // namespace rgcd
