#include "wmft/envs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

using Vec2 = Eigen::Vector2d;

Vec2 clamp_arena(const Vec2& p, double arena) { return p.cwiseMax(-arena).cwiseMin(arena); }

Vec2 sample_point(Rng& rng, double extent, double ox = 0.0, double oy = 0.0) {
  return Vec2(uniform_real(rng, -extent, extent) + ox, uniform_real(rng, -extent, extent) + oy);
}

std::string fmt_real(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

thread_local std::uint64_t g_step_calls = 0;

}  // namespace

std::uint64_t step_calls() { return g_step_calls; }

std::string to_string(EnvId id) { return id == EnvId::kReach2d ? "reach2d" : "push2d"; }

std::string to_string(RewardMode mode) { return mode == RewardMode::kSparse ? "sparse" : "dense"; }

EnvId parse_env_id(const std::string& s) {
  if (s == "reach2d") return EnvId::kReach2d;
  if (s == "push2d") return EnvId::kPush2d;
  throw ConfigError("unknown environment id '" + s + "' (expected reach2d or push2d)");
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "sparse") return RewardMode::kSparse;
  if (s == "dense") return RewardMode::kDense;
  throw ConfigError("unknown reward mode '" + s + "' (expected sparse or dense)");
}

void EnvSpec::validate() const {
  if (episode_length < 1) throw ConfigError("episode_length must be positive");
  if (action_repeat < 1) throw ConfigError("action_repeat must be positive");
  if (!(step_scale > 0.0)) throw ConfigError("step_scale must be positive");
  if (!(goal_threshold > 0.0)) throw ConfigError("goal_threshold must be positive");
  if (!(contact_radius > 0.0)) throw ConfigError("contact_radius must be positive");
  if (!(friction >= 0.0 && friction < 1.0)) throw ConfigError("friction must lie in [0, 1)");
  if (!(arena > 0.0) || !(init_extent > 0.0) || init_extent > arena) {
    throw ConfigError("need 0 < init_extent <= arena");
  }
}

EnvSpec make_env_spec(EnvId id, RewardMode mode) {
  EnvSpec spec;
  spec.id = id;
  spec.reward_mode = mode;
  if (id == EnvId::kPush2d) {
    spec.episode_length = 100;
    spec.goal_threshold = 0.15;
  }
  return spec;
}

Vector reset(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, 0x5eed);
  const double ox = spec.goal_offset_x;
  const double oy = spec.goal_offset_y;
  if (spec.id == EnvId::kReach2d) {
    const Vec2 agent = sample_point(rng, spec.init_extent);
    Vec2 goal = clamp_arena(sample_point(rng, spec.init_extent, ox, oy), spec.arena);
    while ((goal - agent).norm() < 2.0 * spec.goal_threshold) {
      goal = clamp_arena(sample_point(rng, spec.init_extent, ox, oy), spec.arena);
    }
    Vector s(4);
    s << agent, goal;
    return s;
  }
  const double block_extent = 0.5 * spec.init_extent;
  const Vec2 block = sample_point(rng, block_extent);
  Vec2 goal = clamp_arena(sample_point(rng, spec.init_extent, ox, oy), spec.arena);
  while ((goal - block).norm() < 2.0 * spec.goal_threshold) {
    goal = clamp_arena(sample_point(rng, spec.init_extent, ox, oy), spec.arena);
  }
  Vec2 agent = sample_point(rng, spec.init_extent);
  while ((agent - block).norm() < 2.0 * spec.contact_radius) agent = sample_point(rng, spec.init_extent);
  Vector s(6);
  s << agent, block, goal;
  return s;
}

StepResult step(const EnvSpec& spec, const Vector& state, const Vector& action) {
  if (state.size() != spec.state_dim() || action.size() != spec.action_dim()) {
    throw ShapeError("step: state or action has the wrong dimension");
  }
  ++g_step_calls;
  StepResult out;
  const Vec2 a_raw = action.head<2>();
  const Vec2 a = a_raw.cwiseMax(-1.0).cwiseMin(1.0);
  out.clamped = (a != a_raw);

  if (spec.id == EnvId::kReach2d) {
    Vec2 p = state.head<2>();
    const Vec2 g = state.segment<2>(2);
    double dist = (p - g).norm();
    for (int k = 0; k < spec.action_repeat; ++k) {
      p = clamp_arena(p + spec.step_scale * a, spec.arena);
      dist = (p - g).norm();
      if (dist < spec.goal_threshold) break;
    }
    out.success = dist < spec.goal_threshold;
    out.reward = spec.reward_mode == RewardMode::kSparse ? (out.success ? 1.0 : 0.0) : -dist;
    out.next_state = state;
    out.next_state.head<2>() = p;
    out.done = out.success;
    return out;
  }

  Vec2 p = state.head<2>();
  Vec2 b = state.segment<2>(2);
  const Vec2 g = state.segment<2>(4);
  bool contact = false;
  for (int k = 0; k < spec.action_repeat; ++k) {
    p = clamp_arena(p + spec.step_scale * a, spec.arena);
    const Vec2 rel = b - p;
    const double d = rel.norm();
    if (d < spec.contact_radius) {
      contact = true;
      const Vec2 dir = d > 1e-12 ? Vec2(rel / d) : Vec2(a.norm() > 1e-12 ? Vec2(a / a.norm()) : Vec2(1.0, 0.0));
      const Vec2 pushed = p + spec.contact_radius * dir;
      b = clamp_arena(b + (1.0 - spec.friction) * (pushed - b), spec.arena);
    }
    if ((b - g).norm() < spec.goal_threshold) break;
  }
  out.success = (b - g).norm() < spec.goal_threshold;
  if (spec.reward_mode == RewardMode::kSparse) {
    out.reward = out.success ? 1.0 : (contact ? 0.5 : 0.0);
  } else {
    out.reward = -((p - b).norm() + 2.0 * (b - g).norm()) / 3.0;
  }
  out.next_state.resize(6);
  out.next_state << p, b, g;
  out.done = out.success;
  return out;
}

Vector scripted_action(const EnvSpec& spec, const Vector& state) {
  if (spec.id == EnvId::kReach2d) {
    const Vec2 p = state.head<2>();
    const Vec2 g = state.segment<2>(2);
    return ((g - p) / spec.step_scale).cwiseMax(-1.0).cwiseMin(1.0);
  }
  const Vec2 p = state.head<2>();
  const Vec2 b = state.segment<2>(2);
  const Vec2 g = state.segment<2>(4);
  const Vec2 to_goal = g - b;
  const Vec2 dir = to_goal.norm() > 1e-12 ? Vec2(to_goal.normalized()) : Vec2(1.0, 0.0);
  const Vec2 to_block = b - p;
  const double alignment = to_block.norm() > 1e-12 ? to_block.normalized().dot(dir) : 1.0;
  Vec2 target;
  if (alignment > 0.9 && to_block.norm() < spec.contact_radius + 0.1) {
    target = b + dir * spec.contact_radius;  // push through the block
  } else {
    target = b - dir * (spec.contact_radius + 0.05);  // get behind it
    // Sidestep when the straight path to the approach point would hit the block.
    if (to_block.normalized().dot(dir) < 0.0 && to_block.norm() < 2.0 * spec.contact_radius) {
      const Vec2 side(-dir.y(), dir.x());
      target = b + side * (2.0 * spec.contact_radius);
    }
  }
  Vector a = ((target - p) / spec.step_scale).cwiseMax(-1.0).cwiseMin(1.0);
  return a;
}

std::vector<Episode> gen_medium_dataset(const EnvSpec& spec, int n_episodes, double noise_std,
                                        std::uint64_t seed) {
  spec.validate();
  if (n_episodes <= 0) throw ConfigError("n_episodes must be positive");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  const std::string provenance = "medium:scripted-proportional env=" + to_string(spec.id) +
                                 " noise_std=" + fmt_real(noise_std) +
                                 " seed=" + std::to_string(seed);
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(n_episodes));
  for (int i = 0; i < n_episodes; ++i) {
    const std::uint64_t reset_seed = make_stream(seed, static_cast<std::uint64_t>(i))();
    Rng noise = make_stream(seed, 1'000'000ULL + static_cast<std::uint64_t>(i));
    Episode ep = rollout(spec, reset_seed, [&](const Vector& s, int) {
      Vector a = scripted_action(spec, s);
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) += noise_std * standard_normal(noise);
      return Vector(a.cwiseMax(-1.0).cwiseMin(1.0));
    });
    ep.provenance = provenance;
    out.push_back(std::move(ep));
  }
  return out;
}

double success_rate(const std::vector<Episode>& episodes) {
  if (episodes.empty()) return 0.0;
  double n = 0.0;
  for (const auto& e : episodes) n += e.success ? 1.0 : 0.0;
  return n / static_cast<double>(episodes.size());
}

}  // namespace wmft
