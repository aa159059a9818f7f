#include "rgcd/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "rgcd/autodiff/grad_check.hpp"
#include "rgcd/autodiff/ops.hpp"
#include "rgcd/rng.hpp"
#include "rgcd/trainer.hpp"

namespace rgcd {

namespace {

using ad::ScalarFn;
using ad::Tape;
using ad::Var;

// Builds the objective and its parameters for one seed.
using CaseFn = std::function<std::pair<ScalarFn, std::vector<Array>>(StreamRng&)>;

// Contracts a tensor with fixed random weights so every entry matters.
Var contract(Var v, StreamRng& rng) {
  Tape& tape = *v.tape();
  return ad::sum(ad::mul(v, tape.constant(rng.normal_array(v.shape()))));
}

std::size_t dim(StreamRng& rng) { return rng.index(1, 4); }

std::vector<std::pair<std::string, CaseFn>> primitive_cases() {
  std::vector<std::pair<std::string, CaseFn>> out;
  auto binary = [](std::string name, Var (*op)(Var, Var), bool positive_rhs) {
    return std::pair<std::string, CaseFn>(
        "autodiff." + name, [op, positive_rhs](StreamRng& rng) {
          const std::size_t r = dim(rng), c = dim(rng);
          Array a = rng.normal_array({r, c});
          Array b = rng.normal_array({c});
          if (positive_rhs) {
            for (auto& x : b.values()) x = 0.5 + std::abs(x);
          }
          const std::uint64_t wseed = rng.index(0, 1u << 30);
          ScalarFn f = [op, wseed](Tape&, std::span<const Var> p) {
            StreamRng w(wseed, Stream::gradcheck, 0);
            // Suffix broadcast of b and the full-shape case in one objective.
            Var bb = ad::broadcast_to(p[1], p[0].shape());
            return ad::add(contract(op(p[0], p[1]), w), contract(op(p[0], bb), w));
          };
          return std::make_pair(f, std::vector<Array>{a, b});
        });
  };
  out.push_back(binary("add", ad::add, false));
  out.push_back(binary("sub", ad::sub, false));
  out.push_back(binary("mul", ad::mul, false));
  out.push_back(binary("div", ad::div, true));

  auto unary = [](std::string name, std::function<Var(Var)> op, bool positive) {
    return std::pair<std::string, CaseFn>("autodiff." + name, [op, positive](StreamRng& rng) {
      const std::size_t r = dim(rng), c = dim(rng);
      Array a = rng.normal_array({r, c});
      if (positive) {
        for (auto& x : a.values()) x = 0.1 + std::abs(x);
      }
      const std::uint64_t wseed = rng.index(0, 1u << 30);
      ScalarFn f = [op, wseed](Tape&, std::span<const Var> p) {
        StreamRng w(wseed, Stream::gradcheck, 0);
        return contract(op(p[0]), w);
      };
      return std::make_pair(f, std::vector<Array>{a});
    });
  };
  out.push_back(unary("scale", [](Var v) { return ad::scale(v, -1.7); }, false));
  out.push_back(unary("shift", [](Var v) { return ad::square(ad::shift(v, 0.3)); }, false));
  out.push_back(unary("tanh", [](Var v) { return ad::tanh(v); }, false));
  out.push_back(unary("square", [](Var v) { return ad::square(v); }, false));
  out.push_back(unary("sqrt_shifted", [](Var v) { return ad::sqrt_shifted(v, 0.05); }, true));
  out.push_back(unary("sum", [](Var v) { return ad::square(ad::sum(v)); }, false));
  out.push_back(unary("mean", [](Var v) { return ad::square(ad::mean(v)); }, false));
  out.push_back(unary("row_sum", [](Var v) { return ad::square(ad::row_sum(v)); }, false));
  out.push_back(unary("transpose", [](Var v) { return ad::tanh(ad::transpose(v)); }, false));
  out.push_back(unary("reshape", [](Var v) {
    return ad::tanh(ad::reshape(v, {v.value().size()}));
  }, false));
  out.push_back(unary("slice", [](Var v) {
    const std::size_t r = v.shape()[0];
    return ad::square(ad::slice_rows(v, r / 2, r));
  }, false));
  out.push_back(unary("gather", [](Var v) {
    const std::size_t r = v.shape()[0];
    return ad::square(ad::gather_rows(v, {r - 1, 0, r - 1}));
  }, false));
  out.push_back(unary("broadcast", [](Var v) {
    ad::Shape s{3};
    for (auto e : v.shape()) s.push_back(e);
    return ad::tanh(ad::broadcast_to(v, s));
  }, false));

  out.emplace_back("autodiff.matmul", [](StreamRng& rng) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const std::uint64_t wseed = rng.index(0, 1u << 30);
    ScalarFn f = [wseed](Tape&, std::span<const Var> p) {
      StreamRng w(wseed, Stream::gradcheck, 0);
      return contract(ad::matmul(p[0], p[1]), w);
    };
    return std::make_pair(f, std::vector<Array>{rng.normal_array({m, k}), rng.normal_array({k, n})});
  });
  out.emplace_back("autodiff.concat", [](StreamRng& rng) {
    const std::size_t r = dim(rng), c1 = dim(rng), c2 = dim(rng);
    const std::uint64_t wseed = rng.index(0, 1u << 30);
    ScalarFn f = [wseed](Tape&, std::span<const Var> p) {
      StreamRng w(wseed, Stream::gradcheck, 0);
      const Var cols[] = {p[0], p[1]};
      const Var rows[] = {ad::transpose(p[0]), ad::transpose(p[1])};
      return ad::add(contract(ad::tanh(ad::concat(cols, 1)), w),
                     contract(ad::square(ad::concat(rows, 0)), w));
    };
    return std::make_pair(f, std::vector<Array>{rng.normal_array({r, c1}), rng.normal_array({r, c2})});
  });
  return out;
}

// A reduced run: 3 frames of width 2, two classes, 6 hidden units, rank 2.
RunConfig reduced_config() {
  RunConfig c;
  c.data.classes = 2;
  c.data.frames = 3;
  c.data.dim = 2;
  c.data.train_prompts = 4;
  c.data.heldout_prompts = 4;
  c.codec.pixels = 3;
  c.reward.frames_sampled = 2;
  c.schedule.grid_size = 12;
  c.train.skip = 2;
  c.student.hidden = 6;
  c.student.lora_rank = 2;
  c.student.head_scale = 1.0;
  c.eval.prompts = 2;
  return c;
}

struct Reduced {
  RunContext ctx;
  ConsistencyStudent student;
};

Reduced make_reduced(std::uint64_t seed, StreamRng& rng) {
  RunConfig c = reduced_config();
  c.seed = seed;
  RunContext ctx = make_context(c);
  TrainerState st = init_state(ctx);
  ConsistencyStudent student = st.student;
  // LoRA up factors start at zero; give every factor a generic value.
  for (auto* t : student.online().tensors()) *t = rng.normal_array(t->shape(), 0.5);
  return {std::move(ctx), std::move(student)};
}

std::vector<Array> adapter_params(const nn::LoraAdapter& a) {
  std::vector<Array> out;
  for (const auto& l : a.layers) {
    out.push_back(l.down);
    out.push_back(l.up);
  }
  return out;
}

struct Batch {
  Array z;
  Array emb;
  std::vector<std::size_t> classes;
  std::vector<double> omega;
  std::vector<double> t;
};

Batch random_batch(const Reduced& r, StreamRng& rng, std::size_t rows) {
  const auto& lib = r.ctx.dataset.library();
  const auto& sc = r.student.config();
  const auto& sched = r.student.schedule();
  Batch b{rng.normal_array({rows, sc.latent.flat()}), Array({rows, sc.embed_dim}), {}, {}, {}};
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t c = rng.index(0, lib.classes() - 1);
    b.classes.push_back(c);
    for (std::size_t j = 0; j < sc.embed_dim; ++j) b.emb[i * sc.embed_dim + j] = lib.embedding(c)[j];
    b.omega.push_back(rng.uniform(sc.guidance.min, sc.guidance.max));
    b.t.push_back(rng.uniform(sched.epsilon(), sched.horizon()));
  }
  return b;
}

std::vector<std::pair<std::string, CaseFn>> composite_cases() {
  std::vector<std::pair<std::string, CaseFn>> out;
  out.emplace_back("student.f_theta", [](StreamRng& rng) {
    auto r = std::make_shared<Reduced>(make_reduced(rng.index(0, 1u << 30), rng));
    auto b = std::make_shared<Batch>(random_batch(*r, rng, 3));
    const std::uint64_t wseed = rng.index(0, 1u << 30);
    const double scale = r->student.online().scale;
    ScalarFn f = [r, b, wseed, scale](Tape& tape, std::span<const Var> p) {
      StreamRng w(wseed, Stream::gradcheck, 0);
      const auto lora = nn::bind_lora_vars(tape, p, scale);
      return contract(r->student.f_theta(tape, lora, b->z, b->emb, b->omega, b->t), w);
    };
    return std::make_pair(f, adapter_params(r->student.online()));
  });

  auto reward_case = [](bool image, FrameRewardKind kind) {
    return [image, kind](StreamRng& rng) {
      auto r = std::make_shared<Reduced>(make_reduced(rng.index(0, 1u << 30), rng));
      auto suite = std::make_shared<RewardSuite>(r->ctx.dataset.rewards());
      suite->frame.kind = kind;
      const std::size_t rows = 3, m = suite->weights.frames_sampled;
      auto b = std::make_shared<Batch>(random_batch(*r, rng, rows));
      auto frames = std::make_shared<std::vector<std::size_t>>(
          sample_frames(rng, rows, suite->latent.frames, m));
      ScalarFn f = [suite, b, frames, image, m](Tape& tape, std::span<const Var> p) {
        return image ? j_img(tape, *suite, p[0], b->classes, *frames, m)
                     : j_vid(tape, *suite, p[0], b->classes);
      };
      return std::make_pair(f, std::vector<Array>{b->z});
    };
  };
  out.emplace_back("rewards.j_img", reward_case(true, FrameRewardKind::neg_sq_distance));
  out.emplace_back("rewards.j_img.cosine", reward_case(true, FrameRewardKind::cosine));
  out.emplace_back("rewards.j_vid", reward_case(false, FrameRewardKind::neg_sq_distance));

  auto cd_case = [](DistanceKind kind, bool total) {
    return [kind, total](StreamRng& rng) {
      auto r = std::make_shared<Reduced>(make_reduced(rng.index(0, 1u << 30), rng));
      const std::size_t rows = 3;
      auto b = std::make_shared<Batch>(random_batch(*r, rng, rows));
      const auto& grid = r->ctx.grid;
      const std::size_t k = r->ctx.config.train.skip;
      auto n = std::make_shared<std::vector<std::size_t>>();
      for (std::size_t i = 0; i < rows; ++i) n->push_back(rng.index(1, grid.size() - k));
      auto noise = std::make_shared<Array>(rng.normal_array(b->z.shape()));
      const auto& suite = r->ctx.dataset.rewards();
      const std::size_t m = suite.weights.frames_sampled;
      auto frames = std::make_shared<std::vector<std::size_t>>(
          sample_frames(rng, rows, suite.latent.frames, m));
      // A larger c keeps the pseudo-Huber curvature within reach of the
      // finite-difference step.
      const double c = 0.05;
      ScalarFn f = [r, b, n, noise, frames, kind, total, c, m](Tape& tape, std::span<const Var> p) {
        const auto lora = nn::bind_lora_vars(tape, p, r->student.online().scale);
        const auto out = cd_loss(tape, r->student, lora, *r->ctx.teacher, r->ctx.grid, b->z,
                                 b->emb, b->classes, b->omega, *n, r->ctx.config.train.skip,
                                 *noise, kind, c);
        if (!total) return out.loss;
        const auto& s = r->ctx.dataset.rewards();
        return total_loss(out.loss, j_img(tape, s, out.online, b->classes, *frames, m),
                          j_vid(tape, s, out.online, b->classes), s.weights);
      };
      return std::make_pair(f, adapter_params(r->student.online()));
    };
  };
  out.emplace_back("trainer.cd_loss", cd_case(DistanceKind::pseudo_huber, false));
  out.emplace_back("trainer.cd_loss.l2", cd_case(DistanceKind::l2_squared, false));
  out.emplace_back("trainer.total_loss", cd_case(DistanceKind::pseudo_huber, true));
  return out;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed) {
  auto cases = primitive_cases();
  for (auto& c : composite_cases()) cases.push_back(std::move(c));
  std::vector<GradCheckEntry> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    GradCheckEntry e{cases[i].first, 0.0, 0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) {
      StreamRng rng(base_seed, Stream::gradcheck, s, i + 1);
      auto [f, params] = cases[i].second(rng);
      const auto r = ad::grad_check(f, params);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
      e.checked += r.checked;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace rgcd
