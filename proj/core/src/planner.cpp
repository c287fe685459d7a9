#include "wmft/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

constexpr std::uint64_t kPairStream = 1ULL << 40;

Matrix clamp_box(const Matrix& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

void PlanConfig::validate() const {
  if (horizon < 1) throw ConfigError("planning horizon must be at least 1");
  if (population < 1) throw ConfigError("population must be positive");
  if (elites < 1 || elites > population) throw ConfigError("elites must lie in [1, population]");
  if (!(policy_fraction >= 0.0 && policy_fraction < 1.0)) {
    throw ConfigError("policy_fraction must lie in [0, 1)");
  }
  if (iterations < 1) throw ConfigError("planning iterations must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("planning temperature must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(min_std > 0.0 && min_std <= max_std)) throw ConfigError("need 0 < min_std <= max_std");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(policy_noise >= 0.0)) throw ConfigError("policy_noise must be non-negative");
}

int PlanConfig::num_policy_samples() const {
  return static_cast<int>(std::floor(policy_fraction * population));
}

double estimate_return(const WorldModel& m, const Vector& z0, const Matrix& actions,
                       double lambda, double discount, QPair pair) {
  if (actions.rows() != m.dims.action_dim || actions.cols() < 1) {
    throw ShapeError("estimate_return: actions must be action_dim x horizon");
  }
  Vector z = z0;
  double ret = 0.0;
  double disc = 1.0;
  for (Eigen::Index t = 0; t < actions.cols(); ++t) {
    const Vector a = actions.col(t);
    const double r = predict_reward(m, z, a);
    const double u = q_uncertainty(m, z, a);
    ret += disc * (r - lambda * u);
    z = next_latent(m, z, a);
    disc *= discount;
  }
  Rng unused(0);
  const Vector a_h = policy_action(m, z, 0.0, unused);
  const double q = q_estimate(m, z, a_h, pair);
  const double u = q_uncertainty(m, z, a_h);
  ret += disc * (q - lambda * u);
  if (!std::isfinite(ret)) throw NumericError("estimate_return: non-finite return");
  return ret;
}

double estimate_return(const WorldModel& m, const Vector& z0, const Matrix& actions,
                       double lambda, double discount, Rng& rng) {
  return estimate_return(m, z0, actions, lambda, discount,
                         draw_q_pair(static_cast<int>(m.q_heads.size()), rng));
}

Vector estimate_returns(const WorldModel& m, const Vector& z0, const std::vector<Matrix>& actions,
                        double lambda, double discount, QPair pair) {
  if (actions.empty()) throw ShapeError("estimate_returns: empty action sequence");
  const Eigen::Index pop = actions.front().cols();
  Matrix z = z0.replicate(1, pop);
  RowVector ret = RowVector::Zero(pop);
  double disc = 1.0;
  for (const Matrix& a : actions) {
    if (a.rows() != m.dims.action_dim || a.cols() != pop) {
      throw ShapeError("estimate_returns: inconsistent action block");
    }
    const Matrix x = concat_rows(z, a);
    const RowVector r = mlp_forward_batch(m.reward, x);
    ret += disc * r;
    if (lambda > 0.0) {
      const Matrix qs = q_all_batch(m, z, a, false);
      const RowVector mean = qs.colwise().mean();
      const RowVector u =
          ((qs.rowwise() - mean).array().square().colwise().sum() / qs.rows()).sqrt();
      ret -= (disc * lambda) * u;
    }
    z = mlp_forward_batch(m.dynamics, x);
    disc *= discount;
  }
  const Matrix a_h = clamp_box(policy_mean_batch(m, z));
  const Matrix qs = q_all_batch(m, z, a_h, false);
  ret += disc * qs.row(pair.first).cwiseMin(qs.row(pair.second));
  if (lambda > 0.0) {
    const RowVector mean = qs.colwise().mean();
    const RowVector u = ((qs.rowwise() - mean).array().square().colwise().sum() / qs.rows()).sqrt();
    ret -= (disc * lambda) * u;
  }
  return ret.transpose();
}

EliteFit refit_elites(const std::vector<Matrix>& elites, const std::vector<double>& scores,
                      double temperature, double min_std, double max_std) {
  if (elites.empty() || elites.size() != scores.size()) {
    throw PlanningError("refit_elites: need one score per elite");
  }
  const double best = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    w[k] = std::exp(temperature * (scores[k] - best));
    total += w[k];
  }
  EliteFit fit{Matrix::Zero(elites[0].rows(), elites[0].cols()),
               Matrix::Zero(elites[0].rows(), elites[0].cols())};
  for (std::size_t k = 0; k < elites.size(); ++k) fit.mean += (w[k] / total) * elites[k];
  for (std::size_t k = 0; k < elites.size(); ++k) {
    fit.std += (w[k] / total) * (elites[k] - fit.mean).cwiseAbs2();
  }
  fit.std = fit.std.cwiseSqrt().cwiseMax(min_std).cwiseMin(max_std);
  return fit;
}

PlanResult plan(const WorldModel& m, const Vector& state, const std::optional<PlanState>& prev,
                const PlanConfig& cfg, Rng& rng, bool explore) {
  cfg.validate();
  const int horizon = cfg.horizon;
  const int adim = m.dims.action_dim;
  const int pop = cfg.population;
  const int num_pi = cfg.num_policy_samples();
  const int num_gauss = pop - num_pi;
  const Vector z0 = encode(m, state);

  Matrix mean = Matrix::Zero(adim, horizon);
  if (prev.has_value() && prev->mean.rows() == adim && prev->mean.cols() == horizon) {
    mean = prev->mean;
  }
  Matrix std = Matrix::Constant(adim, horizon, cfg.max_std);

  const std::uint64_t base = rng();
  double best_score = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto it_base = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(pop);
    std::vector<Matrix> actions(horizon, Matrix(adim, pop));

    for (int k = 0; k < num_gauss; ++k) {
      Rng r = make_stream(base, it_base + static_cast<std::uint64_t>(k));
      for (int t = 0; t < horizon; ++t) {
        for (int d = 0; d < adim; ++d) {
          const double v = mean(d, t) + std(d, t) * standard_normal(r);
          actions[t](d, k) = std::clamp(v, -1.0, 1.0);
        }
      }
    }

    if (num_pi > 0) {
      std::vector<Rng> streams;
      streams.reserve(num_pi);
      for (int k = 0; k < num_pi; ++k) {
        streams.push_back(make_stream(base, it_base + static_cast<std::uint64_t>(num_gauss + k)));
      }
      Matrix z = z0.replicate(1, num_pi);
      for (int t = 0; t < horizon; ++t) {
        Matrix a = policy_mean_batch(m, z);
        for (int k = 0; k < num_pi; ++k) {
          for (int d = 0; d < adim; ++d) a(d, k) += cfg.policy_noise * standard_normal(streams[k]);
        }
        a = clamp_box(a);
        actions[t].rightCols(num_pi) = a;
        z = next_latent_batch(m, z, a);
      }
    }

    Rng pair_rng = make_stream(base, kPairStream + static_cast<std::uint64_t>(it));
    const QPair pair = draw_q_pair(static_cast<int>(m.q_heads.size()), pair_rng);
    const Vector scores = estimate_returns(m, z0, actions, cfg.lambda, cfg.discount, pair);

    std::vector<int> order;
    order.reserve(pop);
    for (int k = 0; k < pop; ++k) {
      if (std::isfinite(scores(k))) order.push_back(k);
    }
    if (order.empty()) throw PlanningError("plan: every candidate return is non-finite");
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores(a) > scores(b); });
    const std::size_t n_elite = std::min<std::size_t>(static_cast<std::size_t>(cfg.elites), order.size());

    std::vector<Matrix> elites;
    std::vector<double> elite_scores;
    elites.reserve(n_elite);
    for (std::size_t e = 0; e < n_elite; ++e) {
      const int k = order[e];
      Matrix seq(adim, horizon);
      for (int t = 0; t < horizon; ++t) seq.col(t) = actions[t].col(k);
      elites.push_back(std::move(seq));
      elite_scores.push_back(scores(k));
    }
    best_score = elite_scores.front();

    const EliteFit fit = refit_elites(elites, elite_scores, cfg.temperature, cfg.min_std, cfg.max_std);
    mean = cfg.momentum * mean + (1.0 - cfg.momentum) * fit.mean;
    std = fit.std;
  }

  PlanResult out;
  out.final_mean = mean;
  out.final_std = std;
  out.best_score = best_score;
  Vector action = mean.col(0);
  if (explore) {
    for (int d = 0; d < adim; ++d) action(d) += std(d, 0) * standard_normal(rng);
  }
  out.action = action.cwiseMax(-1.0).cwiseMin(1.0);
  out.uncertainty = q_uncertainty(m, z0, out.action);

  out.next.mean = Matrix::Zero(adim, horizon);
  if (horizon > 1) out.next.mean.leftCols(horizon - 1) = mean.rightCols(horizon - 1);
  out.next.std = Matrix::Constant(adim, horizon, cfg.max_std);
  return out;
}

}  // namespace wmft
