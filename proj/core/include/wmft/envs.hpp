#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmft/episode.hpp"
#include "wmft/rng.hpp"

namespace wmft {

enum class EnvId { kReach2d, kPush2d };
enum class RewardMode { kSparse, kDense };

std::string to_string(EnvId id);
std::string to_string(RewardMode mode);
EnvId parse_env_id(const std::string& s);        // ConfigError on unknown ids
RewardMode parse_reward_mode(const std::string& s);

// Deterministic planar control tasks with actions in [-1, 1]^2.
//
// reach2d  state (px, py, gx, gy). The agent moves by action * step_scale
//          and succeeds once within goal_threshold of the goal.
// push2d   state (px, py, bx, by, gx, gy). The agent shoves the block when
//          they come within contact_radius; success once the block is
//          within goal_threshold of the goal. Sparse reward is 0.5 while
//          in contact without success.
struct EnvSpec {
  EnvId id = EnvId::kReach2d;
  RewardMode reward_mode = RewardMode::kSparse;
  int episode_length = 50;
  int action_repeat = 1;
  double step_scale = 0.1;
  double goal_threshold = 0.1;
  double contact_radius = 0.15;
  double friction = 0.0;     // fraction of a push lost to the block (push2d)
  double arena = 1.0;        // positions live in [-arena, arena]^2
  double init_extent = 0.8;  // agent and goal start in [-init_extent, init_extent]^2
  double goal_offset_x = 0.0;  // translation of the goal region (shifted-goal variant)
  double goal_offset_y = 0.0;

  int state_dim() const { return id == EnvId::kReach2d ? 4 : 6; }
  int action_dim() const { return 2; }
  void validate() const;
};

EnvSpec make_env_spec(EnvId id, RewardMode mode = RewardMode::kSparse);

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool done = false;     // true termination (success); time limits are the caller's
  bool success = false;
  bool clamped = false;  // the action left the box and was clamped
};

Vector reset(const EnvSpec& spec, std::uint64_t seed);
StepResult step(const EnvSpec& spec, const Vector& state, const Vector& action);

// Number of step() calls made on this thread so far.
std::uint64_t step_calls();

// Scripted proportional controller that heads for the goal (reach2d) or gets
// behind the block and pushes it toward the goal (push2d). Noise-free.
Vector scripted_action(const EnvSpec& spec, const Vector& state);

// Runs one episode with an action callback. done is set on success or at the
// time limit; the episode's success flag records whether the task was solved.
template <typename Policy>
Episode rollout(const EnvSpec& spec, std::uint64_t reset_seed, Policy&& policy) {
  Episode ep;
  ep.states.push_back(reset(spec, reset_seed));
  for (int t = 0; t < spec.episode_length; ++t) {
    const Vector a = policy(ep.states.back(), t);
    StepResult r = step(spec, ep.states.back(), a);
    ep.actions.push_back(a.cwiseMax(-1.0).cwiseMin(1.0));
    ep.rewards.push_back(r.reward);
    const bool last = r.done || t + 1 == spec.episode_length;
    ep.dones.push_back(last);
    ep.states.push_back(std::move(r.next_state));
    if (r.success) ep.success = true;
    if (last) break;
  }
  return ep;
}

// Noisy scripted controller rollouts: the medium composition.
std::vector<Episode> gen_medium_dataset(const EnvSpec& spec, int n_episodes, double noise_std,
                                        std::uint64_t seed);

double success_rate(const std::vector<Episode>& episodes);

}  // namespace wmft
