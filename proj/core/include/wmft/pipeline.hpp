#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wmft/envs.hpp"
#include "wmft/planner.hpp"
#include "wmft/replay.hpp"
#include "wmft/worldmodel.hpp"

namespace wmft {

struct RunConfig {
  EnvSpec env;
  std::string dataset;  // offline dataset path; empty when training from scratch

  int latent_dim = 50;
  int hidden_dim = 512;
  int hidden_layers = 2;
  int num_q = 5;

  LossWeights loss;
  OptimConfig optim;
  PlanConfig plan;
  PerConfig per;

  int batch_size = 256;
  std::int64_t pretrain_steps = 20000;
  int online_trials = 20;
  int updates_per_online_step = 1;
  int eval_episodes = 20;
  std::int64_t checkpoint_every = 0;  // pretrain steps between checkpoints; 0 keeps only the last
  std::size_t online_capacity = 50000;
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 0;

  ModelDims model_dims() const;
  // The training subsequence length equals the planning horizon.
  int train_horizon() const { return plan.horizon; }
  void validate() const;
};

struct TrialRecord {
  int trial = 0;
  double episode_return = 0.0;
  bool success = false;
  bool aborted = false;  // planning failed mid-episode; counted as a failure
  int steps = 0;
  int clamped_actions = 0;
  double mean_uncertainty = 0.0;  // planner ensemble std over the episode
  double max_uncertainty = 0.0;
  UpdateMetrics update_summary;  // mean over the updates that followed the episode
  int num_updates = 0;
};

// Append-only CSV of per-update and per-trial rows. Every value is a pure
// function of (config, seed, dataset), so two identical runs produce
// byte-identical files. Wall-clock timings go to an optional side stream.
class MetricsLog {
 public:
  static const char* header();

  MetricsLog() = default;
  explicit MetricsLog(std::ostream* out, std::ostream* timing = nullptr);
  // Opens (creating or appending) <dir>/metrics.csv and <dir>/timing.csv.
  static MetricsLog open(const std::filesystem::path& dir);

  void log_update(const std::string& stage, std::int64_t step, int trial,
                  const UpdateMetrics& m);
  void log_trial(const std::string& stage, std::int64_t step, const TrialRecord& rec);

  std::size_t rows() const { return rows_; }

 private:
  void timing_row();

  std::shared_ptr<std::ofstream> owned_out_;
  std::shared_ptr<std::ofstream> owned_timing_;
  std::ostream* out_ = nullptr;
  std::ostream* timing_ = nullptr;
  std::size_t rows_ = 0;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

// Where a stage writes checkpoints and metrics. Both are optional.
struct RunSink {
  std::filesystem::path dir;  // checkpoints go to <dir>/<stage>_<step>
  MetricsLog* metrics = nullptr;
};

WorldModel init_model(const RunConfig& cfg);

// Checkpoint holding the model plus the environment id, so a model cannot be
// resumed against a different task.
void save_run_checkpoint(const std::filesystem::path& path, const WorldModel& m,
                         const EnvSpec& env);
WorldModel load_run_checkpoint(const std::filesystem::path& path, const EnvSpec& env);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& stage,
                                      std::int64_t step);

// Updates on batches drawn from the offline buffer only. Never touches the
// environment. On a numeric failure the last good model is checkpointed
// (when a sink directory is set) before the error propagates.
WorldModel pretrain(const RunConfig& cfg, const std::vector<Episode>& dataset,
                    const RunSink& sink = {}, std::optional<WorldModel> init = std::nullopt);

// Called before every environment step during collection.
using StepTrace = std::function<void(int trial, int t, const Vector& state, const Vector& action)>;

struct FinetuneResult {
  WorldModel model;
  std::vector<TrialRecord> trials;
  std::vector<Episode> collected;  // every online episode in collection order
};

// Alternates one planner-driven episode with updates on balanced batches.
// `stage` labels metric rows and checkpoints ("finetune", or "online" when
// starting from scratch).
FinetuneResult finetune(const RunConfig& cfg, WorldModel model, const std::vector<Episode>& offline,
                        const RunSink& sink = {}, const std::string& stage = "finetune",
                        const StepTrace& trace = {});

struct EvalEpisode {
  std::uint64_t reset_seed = 0;
  double episode_return = 0.0;
  bool success = false;
  int steps = 0;
};

struct EvalReport {
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::vector<EvalEpisode> episodes;
};

// Deterministic planner emission on a fixed grid of reset seeds derived from
// `seed`. Training reset seeds always have the top bit set and evaluation
// seeds never do, so the two sets are disjoint.
EvalReport evaluate(const WorldModel& m, const EnvSpec& env, const PlanConfig& plan,
                    int n_episodes, std::uint64_t seed);

std::uint64_t training_reset_seed(std::uint64_t run_seed, std::uint64_t trial);
std::uint64_t evaluation_reset_seed(std::uint64_t eval_seed, std::uint64_t episode);

// First n_transitions collected by a from-scratch online run. The episode
// that crosses the boundary is truncated so the prefix has exactly
// n_transitions transitions.
std::vector<Episode> gen_medium_replay_dataset(const RunConfig& cfg, std::size_t n_transitions,
                                               std::uint64_t seed);

}  // namespace wmft
