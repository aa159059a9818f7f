#include <gtest/gtest.h>

#include <algorithm>

#include "rgcd/config.hpp"
#include "rgcd/error.hpp"

using namespace rgcd;

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config_text("# nothing but a comment\n\n");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.train.skip, 5u);
  EXPECT_EQ(c.train.omega_min, 5.0);
  EXPECT_EQ(c.train.omega_max, 15.0);
  EXPECT_EQ(c.reward.beta_img, 1.0);
  EXPECT_EQ(c.reward.beta_vid, 2.0);
  EXPECT_EQ(c.reward.frames_sampled, 6u);
}

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse_config_text(
      "seed = 12\n"
      "train.steps=400   # shorter run\n"
      "  reward.beta_vid = 3\n"
      "codec.kind = identity\n"
      "codec.pixels = 4\n");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.train.steps, 400u);
  EXPECT_EQ(c.reward.beta_vid, 3.0);
  EXPECT_EQ(c.codec.kind, "identity");
}

TEST(Config, SkipLargerThanGridRejected) {
  try {
    parse_config_text("grid.size = 5\ntrain.skip = 20\n");
    FAIL();
  } catch (const ConfigError& e) {
    const auto& v = e.violations();
    EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const std::string& s) {
      return s.find("N >= k + 2") != std::string::npos;
    }));
  }
}

TEST(Config, CollectsEveryProblem) {
  try {
    parse_config_text(
        "train.stpes = 10\n"
        "reward.frames_sampled = 20\n"
        "train.learning_rate = fast\n"
        "seed = 1\nseed = 2\n"
        "no equals sign\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.violations().size(), 5u);
  }
}

TEST(Config, RoundTripIsExact) {
  RunConfig c;
  c.seed = 99;
  c.train.learning_rate = 0.1 + 0.2;  // not representable in few digits
  c.reward.target_offset = 1.0 / 3.0;
  c.output_dir = "runs/a";
  const RunConfig back = parse_config_text(serialize_config(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), serialize_config(c));
}

TEST(Config, EveryKeyIsSerialized) {
  const std::string text = serialize_config(RunConfig{});
  for (const auto& k : config_keys()) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
}

TEST(Config, OverridesValidateTheirValue) {
  RunConfig c;
  apply_override(c, "train.batch=16");
  EXPECT_EQ(c.train.batch, 16u);
  EXPECT_THROW(apply_override(c, "train.batch=-1"), ConfigError);
  EXPECT_THROW(apply_override(c, "bogus.key=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.batch"), ConfigError);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(parse_config("/nonexistent/rgcd.cfg"), IoError);
}
