#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rgcd {

// Every tunable of a run. Field defaults are the documented desk-scale
// defaults; see docs/config.md for the file grammar and key list.
struct RunConfig {
  struct Schedule {
    double rate_min = 0.1;
    double rate_max = 20.0;
    double horizon = 1.0;
    double epsilon = 0.01;
    std::size_t grid_size = 100;
    friend bool operator==(const Schedule&, const Schedule&) = default;
  } schedule;

  struct Data {
    std::size_t classes = 4;
    std::size_t embed_dim = 4;
    std::size_t frames = 8;
    std::size_t dim = 4;
    double spread = 0.005;
    double amplitude = 1.0;
    double embed_jitter = 0.05;
    std::size_t train_prompts = 64;
    std::size_t heldout_prompts = 128;
    friend bool operator==(const Data&, const Data&) = default;
  } data;

  struct Codec {
    std::string kind = "linear";
    std::size_t pixels = 6;
    friend bool operator==(const Codec&, const Codec&) = default;
  } codec;

  struct Reward {
    std::string frame_kind = "neg_sq_distance";
    std::size_t frames_sampled = 6;
    double beta_img = 1.0;
    double beta_vid = 2.0;
    double velocity_weight = 0.5;
    double target_offset = 1.0;
    double cosine_eta = 1e-6;
    friend bool operator==(const Reward&, const Reward&) = default;
  } reward;

  struct Teacher {
    std::string kind = "analytic";
    std::size_t hidden = 64;
    std::size_t steps = 5000;
    std::size_t batch = 32;
    double learning_rate = 2e-3;
    friend bool operator==(const Teacher&, const Teacher&) = default;
  } teacher;

  struct Student {
    std::size_t hidden = 64;
    std::size_t lora_rank = 8;
    double lora_scale = 1.0;
    double head_scale = 0.01;
    double sigma_data = 0.5;
    double input_scale = 0.1;
    friend bool operator==(const Student&, const Student&) = default;
  } student;

  struct Train {
    std::size_t skip = 5;
    double omega_min = 5.0;
    double omega_max = 15.0;
    double learning_rate = 1e-3;
    std::string optimizer = "adam";
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double ema_rate = 0.95;
    std::size_t steps = 3000;
    std::size_t batch = 8;
    std::string distance = "pseudo_huber";
    double huber_scale = 0.001;
    std::size_t checkpoint_every = 0;
    std::size_t probe_every = 500;
    friend bool operator==(const Train&, const Train&) = default;
  } train;

  struct Eval {
    std::size_t samples_per_prompt = 5;
    std::size_t student_steps = 4;
    std::size_t teacher_steps = 50;
    double omega = 7.5;
    std::size_t prompts = 32;
    std::size_t threads = 1;
    double tie_delta = 1e-6;
    friend bool operator==(const Eval&, const Eval&) = default;
  } eval;

  std::uint64_t seed = 0;
  std::string output_dir = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Lists every violated cross-field constraint; empty when valid.
std::vector<std::string> validate(const RunConfig& config);

// Parses `key = value` text. Unknown keys, malformed values and constraint
// violations are collected and thrown together as one ConfigError.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

// Applies one `key=value` override on top of an existing config.
void apply_override(RunConfig& config, const std::string& assignment);

// Canonical text: every key in fixed order, doubles printed with 17
// significant digits so parsing returns an equal config.
std::string serialize_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace rgcd
