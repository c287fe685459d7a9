#pragma once

#include <optional>
#include <vector>

#include "wmft/worldmodel.hpp"

namespace wmft {

struct PlanConfig {
  int horizon = 5;
  int population = 512;
  int elites = 50;
  double policy_fraction = 0.1;
  int iterations = 6;
  double temperature = 0.5;
  double momentum = 0.1;
  double lambda = 1.0;  // uncertainty coefficient
  double min_std = 0.01;
  double max_std = 0.5;
  double discount = 0.99;
  double policy_noise = 0.05;

  void validate() const;
  int num_policy_samples() const;
};

// Time-dependent diagonal Gaussian over action sequences; column t is step t.
struct PlanState {
  Matrix mean;  // action_dim x horizon
  Matrix std;   // action_dim x horizon
};

// Rolls `actions` (action_dim x h) from z0 through the latent dynamics and
// returns sum_t gamma^t (R_t - lambda u_t) + gamma^h (Q(z_h, a_h) - lambda u_h),
// with Q the pair minimum over online heads and a_h the noiseless policy action.
double estimate_return(const WorldModel& m, const Vector& z0, const Matrix& actions,
                       double lambda, double discount, QPair pair);
double estimate_return(const WorldModel& m, const Vector& z0, const Matrix& actions,
                       double lambda, double discount, Rng& rng);

// Same objective for a population: actions[t] is action_dim x P.
Vector estimate_returns(const WorldModel& m, const Vector& z0, const std::vector<Matrix>& actions,
                        double lambda, double discount, QPair pair);

struct EliteFit {
  Matrix mean;
  Matrix std;
};

// Softmax(temperature * (score - max)) weighted mean and std of the elites,
// std clamped to [min_std, max_std].
EliteFit refit_elites(const std::vector<Matrix>& elites, const std::vector<double>& scores,
                      double temperature, double min_std, double max_std);

struct PlanResult {
  Vector action;        // emitted action, inside the action box
  PlanState next;       // warm start for the following step
  Matrix final_mean;
  Matrix final_std;
  double best_score = 0.0;
  double uncertainty = 0.0;  // ensemble std at (z0, action)
};

// MPPI over action sequences. With `explore`, the emitted action is the final
// mean's first step plus Gaussian noise of the final fitted std.
PlanResult plan(const WorldModel& m, const Vector& state, const std::optional<PlanState>& prev,
                const PlanConfig& cfg, Rng& rng, bool explore = false);

}  // namespace wmft
