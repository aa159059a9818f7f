#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "rgcd/checkpoint.hpp"
#include "rgcd/trainer.hpp"

using namespace rgcd;

namespace {

bool same_adapter(const nn::LoraAdapter& a, const nn::LoraAdapter& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

bool same_history(const std::vector<LossReport>& a, const std::vector<LossReport>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].l_cd != b[i].l_cd || a[i].j_img != b[i].j_img ||
        a[i].j_vid != b[i].j_vid || a[i].total != b[i].total || a[i].grad_norm != b[i].grad_norm) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(Trainer, SameSeedSameRun) {
  const auto ctx = make_context(test::tiny_config());
  const auto a = train_run(ctx);
  const auto b = train_run(ctx);
  EXPECT_TRUE(same_adapter(a.student.online(), b.student.online()));
  EXPECT_TRUE(same_adapter(a.student.target(), b.student.target()));
  EXPECT_TRUE(same_history(a.history, b.history));
  EXPECT_EQ(a.step, 20u);
}

TEST(Trainer, DifferentSeedDifferentRun) {
  auto c = test::tiny_config();
  const auto a = train_run(make_context(c));
  c.seed = 1;
  const auto b = train_run(make_context(c));
  EXPECT_FALSE(same_adapter(a.student.online(), b.student.online()));
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  auto c = test::tiny_config();
  c.train.probe_every = 5;
  const auto ctx = make_context(c);
  const auto full = train_run(ctx);

  test::TempDir dir("resume");
  RunOptions first;
  first.stop_after = 7;
  const auto half = train_run(ctx, first);
  ASSERT_EQ(half.step, 7u);
  const auto path = dir.path() / "half.rgcd";
  write_checkpoint(path, to_checkpoint(half));

  RunOptions second;
  second.resume_from = path;
  const auto resumed = train_run(ctx, second);
  EXPECT_TRUE(same_adapter(full.student.online(), resumed.student.online()));
  EXPECT_TRUE(same_adapter(full.student.target(), resumed.student.target()));
  EXPECT_TRUE(same_history(full.history, resumed.history));
  ASSERT_EQ(full.probes.size(), resumed.probes.size());
  for (std::size_t i = 0; i < full.probes.size(); ++i) {
    EXPECT_EQ(full.probes[i].self_consistency, resumed.probes[i].self_consistency);
  }
  EXPECT_EQ(encode_checkpoint(to_checkpoint(full)), encode_checkpoint(to_checkpoint(resumed)));
}

TEST(Trainer, ProbesDoNotPerturbTraining) {
  auto c = test::tiny_config();
  const auto quiet = train_run(make_context(c));
  c.train.probe_every = 3;
  const auto probed = train_run(make_context(c));
  EXPECT_TRUE(same_adapter(quiet.student.online(), probed.student.online()));
  EXPECT_TRUE(same_history(quiet.history, probed.history));
  EXPECT_EQ(probed.probes.size(), 1u + 20u / 3u);
}

TEST(Trainer, CheckpointRestoresState) {
  auto c = test::tiny_config();
  const auto ctx = make_context(c);
  const auto st = train_run(ctx);
  const auto back = state_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(st))), ctx);
  EXPECT_EQ(back.step, st.step);
  EXPECT_TRUE(same_adapter(back.student.online(), st.student.online()));
  EXPECT_EQ(back.optimizer.steps(), st.optimizer.steps());
  EXPECT_TRUE(same_history(back.history, st.history));
}

TEST(Trainer, WritesFinalCheckpoint) {
  test::TempDir dir("final");
  RunOptions opt;
  opt.checkpoint_dir = dir.path();
  auto c = test::tiny_config();
  c.train.checkpoint_every = 10;
  train_run(make_context(c), opt);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoint_10.rgcd"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "final.rgcd"));
  const auto [ctx, st] = load_run(dir.path() / "final.rgcd");
  EXPECT_EQ(st.step, 20u);
  EXPECT_EQ(ctx.config, c);
}

TEST(Trainer, HaltsOnNonFiniteValues) {
  test::TempDir dir("halt");
  auto c = test::tiny_config();
  c.train.optimizer = "sgd";
  c.train.learning_rate = 1e300;
  RunOptions opt;
  opt.checkpoint_dir = dir.path();
  try {
    train_run(make_context(c), opt);
    FAIL() << "expected TrainingHalted";
  } catch (const TrainingHalted& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "halt_reason.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() /
                                        ("halt_step_" + std::to_string(e.step()) + ".rgcd")));
  }
}

TEST(Trainer, LossesAreFiniteAndReported) {
  std::size_t calls = 0;
  RunOptions opt;
  opt.on_step = [&](const LossReport& r) {
    EXPECT_EQ(r.step, calls);
    EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_NEAR(r.total, r.l_cd - 1.0 * r.j_img - 2.0 * r.j_vid, 1e-9 * (1.0 + std::abs(r.total)));
    ++calls;
  };
  train_run(make_context(test::tiny_config()), opt);
  EXPECT_EQ(calls, 20u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first Adam step is lr * g / (|g| + eps') per entry.
  Array w = Array::vector({1.0, -2.0, 0.5});
  std::vector<Array*> ts{&w};
  Optimizer opt(OptimizerParams{}, ts);
  const std::vector<Array> g{Array::vector({0.3, -4.0, 0.0})};
  opt.step(ts, g);
  EXPECT_NEAR(w[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(w[1], -2.0 + 1e-3, 1e-10);
  EXPECT_EQ(w[2], 0.5);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Sgd, StepIsLearningRateTimesGradient) {
  Array w = Array::vector({1.0, -2.0});
  std::vector<Array*> ts{&w};
  OptimizerParams p;
  p.kind = OptimizerKind::sgd;
  p.learning_rate = 0.1;
  Optimizer opt(p, ts);
  const std::vector<Array> g{Array::vector({1.0, -3.0})};
  opt.step(ts, g);
  EXPECT_DOUBLE_EQ(w[0], 0.9);
  EXPECT_DOUBLE_EQ(w[1], -1.7);
}

TEST(ConsistencyDistance, PseudoHuberAndL2) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Array::from_rows({{3.0, 4.0}, {0.0, 0.0}}));
  const Array b = Array::from_rows({{0.0, 0.0}, {0.0, 0.0}});
  const double c = 0.5;
  const double ph = tape.value(consistency_distance(tape, a, b, DistanceKind::pseudo_huber, c))[0];
  EXPECT_NEAR(ph, ((std::sqrt(25.0 + c * c) - c) + 0.0) / 2.0, 1e-14);
  const double l2 = tape.value(consistency_distance(tape, a, b, DistanceKind::l2_squared, 0.0))[0];
  EXPECT_NEAR(l2, 12.5, 1e-14);
}

TEST(CdPoints, TimesFollowTheGrid) {
  auto c = test::tiny_config();
  const auto ctx = make_context(c);
  const std::size_t k = ctx.config.train.skip;
  const Array z0 = Array::from_rows({{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}});
  const Array noise = Array::from_rows({{1, -1, 1, -1, 0.5, 0.5, -0.5, 0}});
  const std::vector<std::size_t> cls{0};
  const std::vector<double> w{5.0};
  const std::vector<std::size_t> n{3};
  const auto pts = cd_points(*ctx.teacher, ctx.grid, z0, noise, cls, w, n, k);
  EXPECT_DOUBLE_EQ(pts.t_hi[0], ctx.grid.at(3 + k));
  EXPECT_DOUBLE_EQ(pts.t_lo[0], ctx.grid.at(3));
  const auto same = cd_points(*ctx.teacher, ctx.grid, z0, noise, cls, w, n, 0);
  EXPECT_EQ(same.z_lo, same.z_hi);
}
