#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgcd/autodiff/tape.hpp"
#include "rgcd/config.hpp"
#include "rgcd/dataset.hpp"
#include "rgcd/error.hpp"
#include "rgcd/optim.hpp"
#include "rgcd/student.hpp"
#include "rgcd/teacher.hpp"

namespace rgcd {

enum class DistanceKind { pseudo_huber, l2_squared };
DistanceKind parse_distance(const std::string& name);

struct TrainConfig {
  std::size_t skip = 5;
  GuidanceRange guidance;
  double ema_rate = 0.95;
  std::size_t steps = 3000;
  std::size_t batch = 8;
  DistanceKind distance = DistanceKind::pseudo_huber;
  double huber_c = 0.0;
  OptimizerParams optimizer;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  std::size_t probe_every = 500;
};

TrainConfig train_config_from(const RunConfig& config);

struct LossReport {
  std::size_t step = 0;
  double l_cd = 0.0;
  double j_img = 0.0;
  double j_vid = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct ProbeRecord {
  std::size_t step = 0;
  double self_consistency = 0.0;
  double heldout_frame = 0.0;
  double heldout_sequence = 0.0;
  double ema_gap = 0.0;  // |theta^- - theta|
};

// Points of one distillation pair: z at t_{n+k} and the solver estimate at t_n.
struct CdPoints {
  Array z_hi;
  Array z_lo;
  std::vector<double> t_hi;
  std::vector<double> t_lo;
};

// Perturbs z0 to t_{n+k} with `noise` and takes one augmented solver step
// back to t_n. `n` holds 1-based grid indices, one per row.
CdPoints cd_points(const Teacher& teacher, const TimeGrid& grid, const Array& z0,
                   const Array& noise, std::span<const std::size_t> classes,
                   std::span<const double> omega, std::span<const std::size_t> n, std::size_t k);

// Batch mean of the row distance d(a, b); pseudo-Huber is
// sqrt(|a - b|^2 + c^2) - c.
ad::Var consistency_distance(ad::Tape& tape, ad::Var a, const Array& b, DistanceKind kind,
                             double huber_c);

struct CdOutput {
  ad::Var loss;
  ad::Var online;  // f_theta(z_{t_{n+k}}, w, c, t_{n+k}), reused by the rewards
};

CdOutput cd_loss(ad::Tape& tape, const ConsistencyStudent& student, const nn::LoraBinding& online,
                 const Teacher& teacher, const TimeGrid& grid, const Array& z0,
                 const Array& embeddings, std::span<const std::size_t> classes,
                 std::span<const double> omega, std::span<const std::size_t> n, std::size_t k,
                 const Array& noise, DistanceKind kind, double huber_c);

// L = L_CD - beta_img J_img - beta_vid J_vid.
ad::Var total_loss(ad::Var cd, ad::Var j_img, ad::Var j_vid, const RewardWeights& weights);

// Raised when a step produces a non-finite value. Carries the step index.
class TrainingHalted : public NumericError {
 public:
  TrainingHalted(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct TrainerState {
  RunConfig config;
  TrainConfig train;
  ConsistencyStudent student;
  Optimizer optimizer;
  std::size_t step = 0;  // completed steps
  std::vector<LossReport> history;
  std::vector<ProbeRecord> probes;
};

// Everything a run needs besides mutable state.
struct RunContext {
  RunConfig config;
  SyntheticDataset dataset;
  std::shared_ptr<const Teacher> teacher;
  TimeGrid grid;
};

RunContext make_context(const RunConfig& config);
std::shared_ptr<const Teacher> make_teacher(const RunConfig& config, const SyntheticDataset& data);
TrainerState init_state(const RunContext& context);

// One iteration of the training loop at index state.step.
LossReport train_step(TrainerState& state, const RunContext& context);

// Fixed RK4 trajectories for the self-consistency probe.
struct ProbeSet {
  std::vector<double> times;            // ascending
  std::vector<Array> points;            // [P, F*D] per time
  Array embeddings;                     // [P, Dc]
  std::vector<std::size_t> classes;
  double omega = 0.0;
};

ProbeSet make_probe_set(const RunContext& context, std::size_t trajectories, std::size_t points);
// Mean |f(z_{t_i}) - f(z_{t_{i+1}})| over trajectories and consecutive times.
double self_consistency(const ConsistencyStudent& student, const nn::LoraAdapter& adapter,
                        const ProbeSet& probes);

struct HeldoutRewards {
  double frame = 0.0;
  double sequence = 0.0;
  double combined = 0.0;
};
// Mean held-out reward metrics of `steps`-step samples (eval.prompts prompts,
// eval.samples_per_prompt seeds each).
HeldoutRewards heldout_rewards(const RunContext& context, const ConsistencyStudent& student,
                               std::size_t steps, const RewardWeights& weights);

ProbeRecord probe(const TrainerState& state, const RunContext& context, const ProbeSet& probes);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> resume_from;
  std::size_t stop_after = 0;  // 0 = run to config.train.steps
  std::function<void(const LossReport&)> on_step;
};

// Runs the loop to completion; writes periodic and final checkpoints when a
// directory is given. On a non-finite loss a diagnostic dump is written next
// to the checkpoints and TrainingHalted propagates.
TrainerState train_run(const RunContext& context, const RunOptions& options = {});

struct CheckpointFile;
CheckpointFile to_checkpoint(const TrainerState& state);
TrainerState state_from_checkpoint(const CheckpointFile& file, const RunContext& context);
// Loads a checkpoint's config and rebuilds the context and state it was written from.
std::pair<RunContext, TrainerState> load_run(const std::filesystem::path& path);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossReport>& history);
void write_probe_curve(const std::filesystem::path& path, const std::vector<ProbeRecord>& probes);

}  // namespace rgcd
