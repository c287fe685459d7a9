#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wmft/errors.hpp"
#include "wmft/planner.hpp"

namespace wmft {
namespace {

using testing_util::random_actions;
using testing_util::reference_return;
using testing_util::tiny_model;
using testing_util::zero_network;

TEST(EstimateReturn, ZeroLambdaIsUnregularisedRolloutExactly) {
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    const WorldModel m = tiny_model(500 + draw, 5);
    Rng rng = make_stream(600 + draw, 0);
    const Vector z0 = encode(m, random_actions(4, 1, rng).col(0));
    const Matrix actions = random_actions(2, 5, rng);
    const QPair pair = draw_q_pair(5, rng);
    EXPECT_EQ(estimate_return(m, z0, actions, 0.0, 0.99, pair),
              reference_return(m, z0, actions, 0.99, pair))
        << "draw " << draw;
  }
}

TEST(EstimateReturn, OneStepExpansion) {
  const WorldModel m = tiny_model(30, 4);
  Rng rng = make_stream(30, 1);
  const Vector z0 = Vector::Random(3);
  const Matrix actions = random_actions(2, 1, rng);
  const QPair pair{1, 3};
  const double lambda = 0.7, gamma = 0.9;
  const Vector a0 = actions.col(0);
  const Vector z1 = next_latent(m, z0, a0);
  Rng unused(0);
  const Vector a1 = policy_action(m, z1, 0.0, unused);
  const double expected = predict_reward(m, z0, a0) - lambda * q_uncertainty(m, z0, a0) +
                          gamma * (q_estimate(m, z1, a1, pair) - lambda * q_uncertainty(m, z1, a1));
  EXPECT_NEAR(estimate_return(m, z0, actions, lambda, gamma, pair), expected, 1e-14);
}

TEST(EstimateReturn, ConstantModelGivesGeometricSeries) {
  WorldModel m = tiny_model(31, 3);
  zero_network(m.reward);
  m.reward.layers.back().biases(0) = 0.5;
  for (MlpParams& q : m.q_heads) {
    zero_network(q);
    q.layers.back().biases(0) = 2.0;
  }
  Rng rng = make_stream(31, 1);
  const Matrix actions = random_actions(2, 4, rng);
  const double g = 0.9;
  const double expected = 0.5 * (1 + g + g * g + g * g * g) + std::pow(g, 4) * 2.0;
  EXPECT_NEAR(estimate_return(m, Vector::Random(3), actions, 3.0, g, rng), expected, 1e-14);
}

TEST(EstimateReturn, PenaltyNeverRaisesTheReturn) {
  const WorldModel m = tiny_model(32, 5);
  Rng rng = make_stream(32, 1);
  for (int k = 0; k < 100; ++k) {
    const Vector z0 = Vector::Random(3);
    const Matrix actions = random_actions(2, 5, rng);
    const QPair pair = draw_q_pair(5, rng);
    EXPECT_LE(estimate_return(m, z0, actions, 1.5, 0.99, pair),
              estimate_return(m, z0, actions, 0.0, 0.99, pair));
  }
}

TEST(EstimateReturn, BatchedScoresAgreeWithSingleRollouts) {
  const WorldModel m = tiny_model(33, 5);
  Rng rng = make_stream(33, 1);
  const Vector z0 = Vector::Random(3);
  std::vector<Matrix> block(5, Matrix(2, 7));
  for (auto& b : block) b = random_actions(2, 7, rng);
  const QPair pair{0, 4};
  const Vector scores = estimate_returns(m, z0, block, 0.8, 0.95, pair);
  for (int k = 0; k < 7; ++k) {
    Matrix seq(2, 5);
    for (int t = 0; t < 5; ++t) seq.col(t) = block[static_cast<std::size_t>(t)].col(k);
    EXPECT_NEAR(scores(k), estimate_return(m, z0, seq, 0.8, 0.95, pair), 1e-12);
  }
}

TEST(EstimateReturn, NonFiniteModelRaises) {
  WorldModel m = tiny_model(34);
  m.reward.layers.back().biases(0) = std::numeric_limits<double>::quiet_NaN();
  Rng rng = make_stream(34, 1);
  EXPECT_THROW(estimate_return(m, Vector::Zero(3), random_actions(2, 3, rng), 0.0, 0.9, rng),
               NumericError);
}

TEST(RefitElites, IdenticalElitesCollapseToMinStd) {
  Matrix seq(2, 3);
  seq << 0.1, 0.2, 0.3, -0.4, -0.5, -0.6;
  const EliteFit fit = refit_elites({seq, seq, seq}, {1.0, 0.5, -2.0}, 0.5, 0.01, 0.5);
  EXPECT_LT((fit.mean - seq).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(fit.std, Matrix::Constant(2, 3, 0.01));
}

TEST(RefitElites, SoftmaxWeightsUseTemperatureAsMultiplier) {
  const Matrix a = Matrix::Constant(1, 1, 1.0);
  const Matrix b = Matrix::Constant(1, 1, -1.0);
  const EliteFit fit = refit_elites({a, b}, {2.0, 0.0}, 0.5, 1e-3, 10.0);
  const double wa = 1.0, wb = std::exp(-1.0);
  const double mean = (wa - wb) / (wa + wb);
  EXPECT_NEAR(fit.mean(0, 0), mean, 1e-15);
  const double var = (wa * (1 - mean) * (1 - mean) + wb * (1 + mean) * (1 + mean)) / (wa + wb);
  EXPECT_NEAR(fit.std(0, 0), std::sqrt(var), 1e-15);
}

PlanConfig small_config() {
  PlanConfig c;
  c.population = 64;
  c.elites = 8;
  c.iterations = 3;
  return c;
}

TEST(Plan, SingleCandidateReturnsItsMean) {
  const WorldModel m = tiny_model(35);
  PlanConfig c;
  c.population = 1;
  c.elites = 1;
  c.policy_fraction = 0.0;
  c.iterations = 1;
  c.momentum = 0.0;
  c.min_std = 1e-12;
  c.max_std = 1e-12;
  PlanState warm;
  warm.mean = Matrix::Constant(2, c.horizon, 0.3);
  warm.mean(1, 0) = -0.6;
  warm.std = Matrix::Constant(2, c.horizon, c.max_std);
  Rng rng = make_stream(35, 1);
  const PlanResult r = plan(m, Vector::Zero(4), warm, c, rng);
  EXPECT_NEAR(r.action(0), 0.3, 1e-9);
  EXPECT_NEAR(r.action(1), -0.6, 1e-9);
}

TEST(Plan, FixedSeedIsBitIdentical) {
  const WorldModel m = tiny_model(36);
  const PlanConfig c = small_config();
  const Vector s = Vector::Constant(4, 0.2);
  Rng r1 = make_stream(36, 1), r2 = make_stream(36, 1);
  const PlanResult a = plan(m, s, std::nullopt, c, r1, true);
  const PlanResult b = plan(m, s, std::nullopt, c, r2, true);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.next.mean, b.next.mean);
  EXPECT_EQ(a.next.std, b.next.std);
  EXPECT_EQ(a.final_mean, b.final_mean);
}

TEST(Plan, WarmStartShiftsMeanAndResetsStd) {
  const WorldModel m = tiny_model(37);
  const PlanConfig c = small_config();
  Rng rng = make_stream(37, 1);
  const PlanResult r = plan(m, Vector::Zero(4), std::nullopt, c, rng);
  for (int t = 0; t + 1 < c.horizon; ++t) EXPECT_EQ(r.next.mean.col(t), r.final_mean.col(t + 1));
  EXPECT_EQ(r.next.mean.col(c.horizon - 1), Vector::Zero(2));
  EXPECT_EQ(r.next.std, Matrix::Constant(2, c.horizon, c.max_std));
  EXPECT_GE(r.final_std.minCoeff(), c.min_std);
  EXPECT_LE(r.final_std.maxCoeff(), c.max_std);
}

TEST(Plan, EmittedActionsStayInBox) {
  const WorldModel m = tiny_model(38);
  PlanConfig c = small_config();
  c.max_std = 2.0;
  Rng rng = make_stream(38, 1);
  std::optional<PlanState> warm;
  for (int k = 0; k < 30; ++k) {
    const PlanResult r = plan(m, Vector::Random(4) * 3.0, warm, c, rng, k % 2 == 0);
    EXPECT_LE(r.action.cwiseAbs().maxCoeff(), 1.0);
    warm = r.next;
  }
}

TEST(Plan, ClimbsToBoxMaximumOfLinearReward) {
  ModelDims d = testing_util::tiny_dims();
  d.hidden_layers = 0;
  Rng init = make_stream(39, 0);
  WorldModel m(d, init);
  for (MlpParams* net : m.online_networks()) zero_network(*net);
  m.reward.layers[0].weights << 0.0, 0.0, 0.0, 1.0, 1.0;
  // Each refinement moves the first-step mean further toward the corner (1, 1).
  double previous = 0.0;
  for (int iterations : {1, 6, 20}) {
    PlanConfig c;
    c.iterations = iterations;
    Rng rng = make_stream(39, 1);
    const PlanResult r = plan(m, Vector::Zero(4), std::nullopt, c, rng);
    EXPECT_GT(r.action.minCoeff(), previous) << iterations << " iterations";
    previous = r.action.minCoeff();
  }
  EXPECT_GT(previous, 0.99);
}

TEST(Plan, ConstantUncertaintyLeavesChoiceUnchanged) {
  WorldModel m = tiny_model(40, 3);
  // Heads differing by constant offsets give the same std everywhere.
  m.q_heads[1] = m.q_heads[0];
  m.q_heads[2] = m.q_heads[0];
  m.q_heads[1].layers.back().biases(0) += 1.0;
  m.q_heads[2].layers.back().biases(0) -= 1.0;
  PlanConfig c = small_config();
  c.lambda = 0.0;
  Rng r1 = make_stream(40, 1), r2 = make_stream(40, 1);
  const PlanResult a = plan(m, Vector::Constant(4, 0.1), std::nullopt, c, r1);
  c.lambda = 2.0;
  const PlanResult b = plan(m, Vector::Constant(4, 0.1), std::nullopt, c, r2);
  EXPECT_LT((a.action - b.action).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Plan, AllNonFiniteScoresRaisePlanningError) {
  WorldModel m = tiny_model(41);
  m.reward.layers.back().biases(0) = std::numeric_limits<double>::quiet_NaN();
  Rng rng = make_stream(41, 1);
  EXPECT_THROW(plan(m, Vector::Zero(4), std::nullopt, small_config(), rng), PlanningError);
}

TEST(PlanConfig, RejectsInvalidFields) {
  PlanConfig c;
  c.elites = c.population + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PlanConfig{};
  c.policy_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PlanConfig{};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PlanConfig{};
  c.horizon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PlanConfig{};
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace wmft
