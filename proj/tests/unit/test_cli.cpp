#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "helpers.hpp"

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rgcd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = rgcd::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> tiny_overrides() {
  return {"-s",
          "data.classes=2",
          "data.frames=4",
          "data.dim=2",
          "data.train_prompts=8",
          "data.heldout_prompts=8",
          "codec.pixels=3",
          "reward.frames_sampled=2",
          "grid.size=20",
          "train.skip=2",
          "train.steps=10",
          "train.batch=4",
          "train.probe_every=5",
          "student.hidden=8",
          "student.lora_rank=2",
          "eval.prompts=4",
          "eval.samples_per_prompt=2",
          "eval.teacher_steps=10"};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: usage:"), std::string::npos);
}

TEST(Cli, MissingSubcommandIsUsageError) {
  EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, ConfigErrorIsOneLine) {
  auto r = run({"train", "-s", "train.batch=0", "-s", "nonsense.key=1", "-q"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
  EXPECT_EQ(count_lines(r.err), 1u);
}

TEST(Cli, RecomputeLeaderboardChecksPublishedTotals) {
  rgcd::test::TempDir dir("cli_lb");
  const auto out = (dir.path() / "lb.csv").string();
  const auto r = run({"recompute-leaderboard", std::string(RGCD_DATA_DIR) + "/leaderboard.csv",
                      "--check", "0.01", "-o", out});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(out));
  const auto missing = run({"recompute-leaderboard", "/nonexistent.csv"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("/nonexistent.csv"), std::string::npos) << missing.err;
}

TEST(Cli, GradcheckWithFewSeeds) {
  const auto r = run({"gradcheck", "--seeds", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("student.f_theta"), std::string::npos);
}

TEST(Cli, TrainResumePlotSampleEval) {
  rgcd::test::TempDir dir("cli_train");
  const auto a = (dir.path() / "a").string();
  const auto b = (dir.path() / "b").string();

  auto args = std::vector<std::string>{"train", "-q", "-o", a};
  for (const auto& s : tiny_overrides()) args.push_back(s);
  ASSERT_EQ(run(args).code, 0);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(a) / "final.rgcd"));
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(a) / "loss_curve.csv"));

  args = {"train", "-q", "-o", b, "--stop-after", "4"};
  for (const auto& s : tiny_overrides()) args.push_back(s);
  ASSERT_EQ(run(args).code, 0);
  const auto half = (std::filesystem::path(b) / "checkpoint_4.rgcd").string();
  ASSERT_TRUE(std::filesystem::exists(half));
  args = {"train", "-q", "-o", b, "--resume", half};
  for (const auto& s : tiny_overrides()) args.push_back(s);
  ASSERT_EQ(run(args).code, 0);

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(std::filesystem::path(a) / "final.rgcd"),
            slurp(std::filesystem::path(b) / "final.rgcd"));

  const auto ckpt = (std::filesystem::path(a) / "final.rgcd").string();
  const auto plot = (dir.path() / "plot").string();
  EXPECT_EQ(run({"plot", ckpt, "-o", plot}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(plot) / "loss.csv"));

  const auto samples = (dir.path() / "s.csv").string();
  EXPECT_EQ(run({"sample", "-m", ckpt, "-n", "2", "-o", samples}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(samples));

  const auto report = (dir.path() / "report").string();
  const auto r = run({"eval", "-m", ckpt, "--prompts", "2", "-o", report});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(report + ".json"));
  EXPECT_TRUE(std::filesystem::exists(report + ".csv"));
}
