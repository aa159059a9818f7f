#include "rgcd/dataset.hpp"

#include <cmath>
#include <numbers>

#include "rgcd/error.hpp"
#include "rgcd/rng.hpp"

namespace rgcd {

SyntheticDataset::SyntheticDataset(PromptLibrary library, std::vector<Prompt> train,
                                   std::vector<Prompt> heldout, RewardSuite rewards,
                                   std::uint64_t seed)
    : library_(std::move(library)),
      train_(std::move(train)),
      heldout_(std::move(heldout)),
      rewards_(std::move(rewards)),
      seed_(seed) {
  if (train_.empty()) throw DomainError("dataset needs at least one training prompt");
  for (const auto& a : train_) {
    for (const auto& b : heldout_) {
      if (a.id == b.id) throw DomainError("held-out prompt " + std::to_string(a.id) + " is also a training prompt");
    }
  }
  rewards_.validate();
}

Array SyntheticDataset::sample(std::size_t cls, std::uint64_t index) const {
  StreamRng rng(seed_, Stream::data, index, cls + 1);
  const Array& m = library_.mean(cls);
  Array z(m.shape());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = m[j] + library_.spread() * rng.normal();
  return z;
}

Example SyntheticDataset::example(std::uint64_t index) const {
  StreamRng rng(seed_, Stream::data, index, 0);
  const std::size_t p = rng.index(0, train_.size() - 1);
  const std::size_t cls = train_[p].cls;
  return Example{p, cls, sample(cls, index)};
}

Array smooth_mean(std::size_t frames, std::size_t dim, double amplitude, std::uint64_t seed,
                  std::size_t cls) {
  StreamRng rng(seed, Stream::library, 1, cls);
  Array m({frames * dim});
  const double fcount = static_cast<double>(frames);
  for (std::size_t d = 0; d < dim; ++d) {
    for (int j = 1; j <= 3; ++j) {
      const double a = amplitude / j * rng.normal();
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t f = 0; f < frames; ++f) {
        m[f * dim + d] += a * std::sin(j * std::numbers::pi * static_cast<double>(f) / fcount + phase);
      }
    }
  }
  return m;
}

NoiseSchedule make_schedule(const RunConfig& config) {
  const auto& s = config.schedule;
  return NoiseSchedule(ScheduleParams{s.rate_min, s.rate_max, s.horizon, s.epsilon, s.grid_size});
}

SyntheticDataset generate_dataset(const RunConfig& config, std::uint64_t seed) {
  if (auto bad = validate(config); !bad.empty()) throw ConfigError(std::move(bad));
  const auto& d = config.data;
  const LatentShape shape{d.frames, d.dim};

  std::vector<Array> embeddings, means;
  for (std::size_t c = 0; c < d.classes; ++c) {
    StreamRng rng(seed, Stream::library, 0, c);
    embeddings.push_back(rng.normal_array({d.embed_dim}));
    means.push_back(smooth_mean(d.frames, d.dim, d.amplitude, seed, c));
  }
  PromptLibrary library(shape, d.spread, embeddings, means);

  auto make_prompt = [&](std::size_t id) {
    StreamRng rng(seed, Stream::prompt, id);
    const std::size_t cls = id % d.classes;
    Array e = embeddings[cls];
    for (auto& v : e.values()) v += d.embed_jitter * rng.normal();
    return Prompt{id, cls, std::move(e)};
  };
  std::vector<Prompt> train, heldout;
  for (std::size_t i = 0; i < d.train_prompts; ++i) train.push_back(make_prompt(i));
  for (std::size_t i = 0; i < d.heldout_prompts; ++i) heldout.push_back(make_prompt(d.train_prompts + i));

  RewardSuite suite;
  suite.latent = shape;
  suite.codec = parse_codec(config.codec.kind) == CodecKind::linear
                    ? Codec::linear(d.dim, config.codec.pixels, seed)
                    : Codec::identity(d.dim);
  suite.weights = {config.reward.beta_img, config.reward.beta_vid, config.reward.frames_sampled};
  suite.frame.kind = parse_frame_reward(config.reward.frame_kind);
  suite.frame.eta = config.reward.cosine_eta;
  suite.sequence.velocity_weight = config.reward.velocity_weight;

  // One offset shared by every class, so the frame and sequence targets sit
  // away from the data means in the same direction.
  const std::size_t p = suite.codec.pixel_dim();
  StreamRng orng(seed, Stream::library, 2);
  Array offset = orng.normal_array({p});
  const double on = ad::l2_norm(offset.values());
  for (auto& v : offset.values()) v *= config.reward.target_offset / on;

  for (std::size_t c = 0; c < d.classes; ++c) {
    Array tau = suite.codec.decode(means[c]);  // [F, P]
    Array g({p}, 0.0);
    for (std::size_t f = 0; f < d.frames; ++f) {
      for (std::size_t q = 0; q < p; ++q) {
        tau.at(f, q) += offset[q];
        g[q] += tau.at(f, q) / static_cast<double>(d.frames);
      }
    }
    Array u = g;
    const double gn = ad::l2_norm(g.values());
    if (gn > 0.0) {
      for (auto& v : u.values()) v /= gn;
    } else {
      u = Array({p}, 0.0);
      u[0] = 1.0;
    }
    suite.sequence.trajectories.push_back(std::move(tau));
    suite.frame.targets.push_back(std::move(g));
    suite.frame.directions.push_back(std::move(u));
  }
  return SyntheticDataset(std::move(library), std::move(train), std::move(heldout), std::move(suite),
                          seed);
}

}  // namespace rgcd
