#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "wmft/dataset_io.hpp"
#include "wmft/envs.hpp"
#include "wmft/errors.hpp"

namespace wmft {
namespace {

Vector reach_state(double px, double py, double gx, double gy) {
  Vector s(4);
  s << px, py, gx, gy;
  return s;
}

Vector action2(double x, double y) {
  Vector a(2);
  a << x, y;
  return a;
}

TEST(Reset, SameSeedSameState) {
  for (EnvId id : {EnvId::kReach2d, EnvId::kPush2d}) {
    const EnvSpec spec = make_env_spec(id);
    EXPECT_EQ(reset(spec, 42), reset(spec, 42));
    EXPECT_NE(reset(spec, 42), reset(spec, 43));
  }
}

TEST(Reset, StatesLieInsideDeclaredRegion) {
  for (EnvId id : {EnvId::kReach2d, EnvId::kPush2d}) {
    const EnvSpec spec = make_env_spec(id);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const Vector s = reset(spec, seed);
      ASSERT_EQ(s.size(), spec.state_dim());
      EXPECT_LE(s.cwiseAbs().maxCoeff(), spec.init_extent);
    }
  }
}

TEST(Reset, GoalsCoverTheInitialisationRegion) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  // 4 x 4 grid over [-extent, extent]^2; every cell should receive goals.
  std::set<int> cells;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Vector s = reset(spec, seed);
    const int cx = std::min(3, static_cast<int>((s(2) + spec.init_extent) / (0.5 * spec.init_extent)));
    const int cy = std::min(3, static_cast<int>((s(3) + spec.init_extent) / (0.5 * spec.init_extent)));
    cells.insert(cx * 4 + cy);
  }
  EXPECT_EQ(cells.size(), 16u);
}

TEST(Reset, ShiftedGoalRegionIsTranslated) {
  EnvSpec spec = make_env_spec(EnvId::kReach2d);
  spec.init_extent = 0.4;
  spec.goal_offset_x = 0.5;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Vector s = reset(spec, seed);
    EXPECT_GE(s(2), 0.1 - 1e-12);
    EXPECT_LE(s(2), 0.9 + 1e-12);
  }
}

TEST(Step, ZeroActionKeepsPosition) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  const Vector s = reach_state(0.2, -0.3, 0.5, 0.5);
  const StepResult r = step(spec, s, action2(0, 0));
  EXPECT_EQ(r.next_state, s);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.done);
}

TEST(Step, OneStepFromGoalSucceeds) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  // Goal 0.15 away along x: a full step of 0.1 leaves 0.05 < threshold 0.1.
  const Vector s = reach_state(0.0, 0.0, 0.15, 0.0);
  const StepResult r = step(spec, s, action2(1.0, 0.0));
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_NEAR(r.next_state(0), 0.1, 1e-15);
}

TEST(Step, IsPure) {
  const EnvSpec spec = make_env_spec(EnvId::kPush2d);
  const Vector s = reset(spec, 3);
  const StepResult a = step(spec, s, action2(0.3, -0.7));
  const StepResult b = step(spec, s, action2(0.3, -0.7));
  EXPECT_EQ(a.next_state, b.next_state);
  EXPECT_EQ(a.reward, b.reward);
}

TEST(Step, OutOfBoxActionsAreClampedAndFlagged) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  const Vector s = reach_state(0.0, 0.0, 0.8, 0.8);
  const StepResult r = step(spec, s, action2(3.0, -0.5));
  EXPECT_TRUE(r.clamped);
  EXPECT_NEAR(r.next_state(0), 0.1, 1e-15);
  EXPECT_NEAR(r.next_state(1), -0.05, 1e-15);
  EXPECT_FALSE(step(spec, s, action2(1.0, -1.0)).clamped);
}

TEST(Step, WrongDimensionsRaise) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  EXPECT_THROW(step(spec, Vector::Zero(6), action2(0, 0)), ShapeError);
  EXPECT_THROW(step(spec, Vector::Zero(4), Vector::Zero(3)), ShapeError);
}

TEST(Step, SparseRewardsTakeGradedValuesAndTrackSuccess) {
  for (EnvId id : {EnvId::kReach2d, EnvId::kPush2d}) {
    const EnvSpec spec = make_env_spec(id);
    Rng rng = make_stream(5, 0);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Vector s = reset(spec, seed);
      for (int t = 0; t < spec.episode_length; ++t) {
        Vector a = scripted_action(spec, s);
        a += 0.5 * action2(standard_normal(rng), standard_normal(rng));
        const StepResult r = step(spec, s, a);
        EXPECT_TRUE(r.reward == 0.0 || r.reward == 0.5 || r.reward == 1.0);
        EXPECT_EQ(r.reward == 1.0, r.success);
        if (id == EnvId::kReach2d) {
          EXPECT_NE(r.reward, 0.5);
        }
        s = r.next_state;
        if (r.done) break;
      }
    }
  }
}

TEST(Step, LipschitzInActionWithStepScale) {
  for (EnvId id : {EnvId::kReach2d, EnvId::kPush2d}) {
    const EnvSpec spec = make_env_spec(id);
    Rng rng = make_stream(6, 0);
    for (int k = 0; k < 2000; ++k) {
      const Vector s = reset(spec, static_cast<std::uint64_t>(k));
      const Vector a = action2(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1));
      const Vector b = action2(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1));
      const Vector pa = step(spec, s, a).next_state.head<2>();
      const Vector pb = step(spec, s, b).next_state.head<2>();
      EXPECT_LE((pa - pb).norm(), spec.step_scale * (a - b).norm() + 1e-12);
    }
  }
}

TEST(Step, PushMovesTheBlockOnContact) {
  const EnvSpec spec = make_env_spec(EnvId::kPush2d);
  Vector s(6);
  s << 0.0, 0.0, 0.15, 0.0, 0.8, 0.0;
  const StepResult r = step(spec, s, action2(1.0, 0.0));
  EXPECT_GT(r.next_state(2), 0.15);
  EXPECT_EQ(r.reward, 0.5);
}

TEST(Step, CountsCalls) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  const std::uint64_t before = step_calls();
  step(spec, reset(spec, 1), action2(0, 0));
  step(spec, reset(spec, 2), action2(0, 0));
  EXPECT_EQ(step_calls() - before, 2u);
}

TEST(Rollout, EpisodeArraysAreConsistent) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  const Episode ep = rollout(spec, 9, [](const Vector&, int) { return action2(0.0, 0.0); });
  EXPECT_EQ(ep.length(), static_cast<std::size_t>(spec.episode_length));
  EXPECT_EQ(ep.states.size(), ep.actions.size() + 1);
  EXPECT_TRUE(ep.dones.back());
  EXPECT_FALSE(ep.success);
  EXPECT_NO_THROW(validate_episode(ep));
}

TEST(GenMediumDataset, NoiselessControllerAlwaysSucceeds) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  EXPECT_EQ(success_rate(gen_medium_dataset(spec, 200, 0.0, 1)), 1.0);
}

TEST(GenMediumDataset, NoiseLowersSuccessAndIsRecorded) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  const auto data = gen_medium_dataset(spec, 100, 5.0, 1);
  const double rate = success_rate(data);
  EXPECT_GE(rate, 0.4);
  EXPECT_LE(rate, 0.6);
  EXPECT_NE(data.front().provenance.find("noise_std=5"), std::string::npos);
}

TEST(GenMediumDataset, FixedSeedGivesIdenticalFile) {
  const EnvSpec spec = make_env_spec(EnvId::kPush2d);
  auto encode = [&](std::uint64_t seed) {
    Dataset d{spec, "test", gen_medium_dataset(spec, 20, 0.5, seed)};
    std::ostringstream out;
    write_dataset(out, d);
    return out.str();
  };
  EXPECT_EQ(encode(4), encode(4));
  EXPECT_NE(encode(4), encode(5));
}

TEST(GenMediumDataset, RejectsBadArguments) {
  const EnvSpec spec = make_env_spec(EnvId::kReach2d);
  EXPECT_THROW(gen_medium_dataset(spec, 0, 1.0, 1), ConfigError);
  EXPECT_THROW(gen_medium_dataset(spec, 5, -1.0, 1), ConfigError);
}

TEST(EnvSpec, ParsesIdsAndRejectsInvalidConstants) {
  EXPECT_EQ(parse_env_id("push2d"), EnvId::kPush2d);
  EXPECT_EQ(parse_reward_mode("dense"), RewardMode::kDense);
  EXPECT_THROW(parse_env_id("walker"), ConfigError);
  EnvSpec spec;
  spec.friction = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = EnvSpec{};
  spec.init_extent = 2.0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

}  // namespace
}  // namespace wmft
