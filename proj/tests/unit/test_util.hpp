#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "wmft/batch.hpp"
#include "wmft/netcore.hpp"
#include "wmft/worldmodel.hpp"

namespace wmft::testing_util {

// ||a - b|| / max(||a||, ||b||) over every entry of the buffer.
inline double relative_error(const GradBuffer& a, const GradBuffer& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    diff += (a.layers[l].weights - b.layers[l].weights).squaredNorm() +
            (a.layers[l].biases - b.layers[l].biases).squaredNorm();
    na += a.layers[l].weights.squaredNorm() + a.layers[l].biases.squaredNorm();
    nb += b.layers[l].weights.squaredNorm() + b.layers[l].biases.squaredNorm();
  }
  const double scale = std::max(std::sqrt(std::max(na, nb)), 1e-300);
  return std::sqrt(diff) / scale;
}

inline ModelDims tiny_dims(int num_q = 3) {
  ModelDims d;
  d.state_dim = 4;
  d.action_dim = 2;
  d.latent_dim = 3;
  d.hidden_dim = 8;
  d.hidden_layers = 1;
  d.num_q = num_q;
  return d;
}

inline WorldModel tiny_model(std::uint64_t seed, int num_q = 3) {
  Rng rng = make_stream(seed, 0);
  return WorldModel(tiny_dims(num_q), rng);
}

// Random subsequence batch. Some samples end early (padding) and some hit a
// successful terminal step, so masking paths are exercised.
inline SubsequenceBatch random_batch(const ModelDims& d, int horizon, int size, Rng& rng) {
  SubsequenceBatch b;
  b.horizon = horizon;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto fill = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    return m;
  };
  for (int t = 0; t < horizon; ++t) {
    b.states.push_back(fill(d.state_dim, size));
    b.actions.push_back(fill(d.action_dim, size) * 0.9);
    b.next_states.push_back(fill(d.state_dim, size));
    RowVector r(size), term(size), valid(size);
    for (int i = 0; i < size; ++i) {
      r(i) = (i + t) % 3 == 0 ? 1.0 : 0.0;
      const bool padded = (i % 4 == 3) && t >= horizon - 1;
      valid(i) = padded ? 0.0 : 1.0;
      term(i) = (padded || (i % 5 == 1 && t == horizon - 1)) ? 1.0 : 0.0;
    }
    b.rewards.push_back(r);
    b.terminal.push_back(term);
    b.valid.push_back(valid);
  }
  b.importance_weights = RowVector(size);
  for (int i = 0; i < size; ++i) {
    b.importance_weights(i) = 0.5 + 0.5 * std::abs(unit(rng));
    b.sources.push_back(i % 2 == 0 ? Source::kOffline : Source::kOnline);
    b.refs.push_back(SampleRef{static_cast<std::uint64_t>(i), 0});
  }
  return b;
}

inline void zero_network(MlpParams& p) {
  for (Layer& l : p.layers) {
    l.weights.setZero();
    l.biases.setZero();
  }
}

// Q heads whose output is the constant `values[i]` for every input.
inline void set_constant_heads(WorldModel& m, const std::vector<double>& values, bool target) {
  auto& heads = target ? m.target_q_heads : m.q_heads;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    zero_network(heads[i]);
    heads[i].layers.back().biases(0) = values[i];
  }
}

inline Matrix random_actions(int rows, int cols, Rng& rng) {
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform_real(rng, -1.0, 1.0);
  return a;
}

// Chi-square survival function for 3 degrees of freedom.
inline double chi2_sf_df3(double x) {
  return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0);
}

// Selects a single loss term: 0 consistency, 1 reward, 2 q, 3 value, 4 awr.
inline LossTerms only(int term) {
  LossTerms t{false, false, false, false, false};
  switch (term) {
    case 0: t.consistency = true; break;
    case 1: t.reward = true; break;
    case 2: t.q = true; break;
    case 3: t.value = true; break;
    default: t.awr = true; break;
  }
  return t;
}

// Loss with every stop-gradient quantity frozen, as a function of one network.
inline double frozen_loss(const WorldModel& m, std::size_t net, const MlpParams& params,
                          const SubsequenceBatch& batch, const LossWeights& w, const LossTerms& terms,
                          const StopGradValues& sg) {
  WorldModel copy = m;
  *copy.online_networks()[net] = params;
  Rng unused = make_stream(0, 0);
  return compute_loss(copy, batch, w, unused, terms, &sg, false).total;
}

// Independent rollout of the unregularised return: rewards along the open-loop
// latent path plus the discounted pair-minimum Q at the policy's final action.
inline double reference_return(const WorldModel& m, const Vector& z0, const Matrix& actions,
                               double discount, QPair pair) {
  Vector z = z0;
  double ret = 0.0;
  double disc = 1.0;
  for (Eigen::Index t = 0; t < actions.cols(); ++t) {
    Vector x(z.size() + actions.rows());
    x << z, actions.col(t);
    ret += disc * mlp_forward(m.reward, x)(0);
    z = mlp_forward(m.dynamics, x);
    disc *= discount;
  }
  const Vector a_h = mlp_forward(m.policy, z).array().tanh().cwiseMax(-1.0).cwiseMin(1.0);
  Vector x(z.size() + a_h.size());
  x << z, a_h;
  const double qa = mlp_forward(m.q_heads[static_cast<std::size_t>(pair.first)], x)(0);
  const double qb = mlp_forward(m.q_heads[static_cast<std::size_t>(pair.second)], x)(0);
  ret += disc * std::min(qa, qb);
  return ret;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("wmft_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace wmft::testing_util
