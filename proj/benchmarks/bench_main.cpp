#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "rgcd/autodiff/ops.hpp"
#include "rgcd/autodiff/tape.hpp"
#include "rgcd/rng.hpp"
#include "rgcd/student.hpp"
#include "rgcd/teacher.hpp"
#include "rgcd/trainer.hpp"

using namespace rgcd;

namespace {

const RunContext& context() {
  static const RunContext ctx = make_context(RunConfig{});
  return ctx;
}

}  // namespace

static void BM_TapeMatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  StreamRng rng(0, Stream::init, 0);
  const Array a = rng.normal_array({n, n}), b = rng.normal_array({n, n});
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var x = tape.parameter(a), y = tape.parameter(b);
    const ad::Var loss = ad::sum(ad::square(ad::tanh(ad::matmul(x, y))));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(x));
  }
}
BENCHMARK(BM_TapeMatmulBackward)->Arg(16)->Arg(64);

static void BM_StudentForward(benchmark::State& state) {
  const auto& ctx = context();
  const TrainerState st = init_state(ctx);
  const auto rows = static_cast<std::size_t>(state.range(0));
  StreamRng rng(0, Stream::sample, 0);
  const Array z = rng.normal_array({rows, ctx.dataset.library().latent().flat()});
  const Array emb = rng.normal_array({rows, ctx.dataset.library().embed_dim()});
  const std::vector<double> w(rows, 7.5), t(rows, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(st.student.f_theta(z, emb, w, t));
}
BENCHMARK(BM_StudentForward)->Arg(1)->Arg(32);

static void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg;
  cfg.train.batch = static_cast<std::size_t>(state.range(0));
  cfg.train.probe_every = 0;
  const RunContext ctx = make_context(cfg);
  TrainerState st = init_state(ctx);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(st, ctx));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32);

static void BM_DdimSample(benchmark::State& state) {
  const auto& ctx = context();
  const auto steps = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> cls(16, 0);
  std::vector<std::uint64_t> seeds(16);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ddim_sample_batch(*ctx.teacher, cls, 7.5, steps, seeds));
  }
}
BENCHMARK(BM_DdimSample)->Arg(4)->Arg(50);

static void BM_ConsistencySample(benchmark::State& state) {
  const auto& ctx = context();
  const TrainerState st = init_state(ctx);
  const std::size_t n = 16;
  Array emb({n, ctx.dataset.library().embed_dim()});
  const Array& e = ctx.dataset.heldout_prompts().front().embedding;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < e.size(); ++j) emb[i * e.size() + j] = e[j];
  }
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = i;
  for (auto _ : state) {
    benchmark::DoNotOptimize(consistency_sample_batch(st.student, st.student.online(), emb, 7.5,
                                                      static_cast<std::size_t>(state.range(0)), seeds));
  }
}
BENCHMARK(BM_ConsistencySample)->Arg(1)->Arg(4);
BENCHMARK_MAIN();
