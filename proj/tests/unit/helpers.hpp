#pragma once

#include <filesystem>
#include <string>

#include "rgcd/config.hpp"
#include "rgcd/rng.hpp"

namespace rgcd::test {

// Small problem that trains in well under a second.
inline RunConfig tiny_config() {
  RunConfig c;
  c.data.classes = 2;
  c.data.frames = 4;
  c.data.dim = 2;
  c.data.train_prompts = 8;
  c.data.heldout_prompts = 8;
  c.codec.pixels = 3;
  c.reward.frames_sampled = 2;
  c.schedule.grid_size = 20;
  c.train.skip = 2;
  c.train.steps = 20;
  c.train.batch = 4;
  c.train.probe_every = 0;
  c.student.hidden = 8;
  c.student.lora_rank = 2;
  c.eval.prompts = 4;
  c.eval.samples_per_prompt = 2;
  c.eval.teacher_steps = 10;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("rgcd_" + tag + "_" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace rgcd::test
