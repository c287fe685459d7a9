#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wmft/batch.hpp"
#include "wmft/netcore.hpp"
#include "wmft/rng.hpp"

namespace wmft {

class Checkpoint;

struct ModelDims {
  int state_dim = 0;
  int action_dim = 0;
  int latent_dim = 50;
  int hidden_dim = 512;
  int hidden_layers = 2;
  int num_q = 5;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct LossWeights {
  double value_coef = 0.1;
  double reward_coef = 0.5;
  double consistency_coef = 20.0;
  double temporal_coef = 0.5;  // rho: weight of step t is rho^t
  double discount = 0.99;
  double expectile = 0.9;
  double awr_temperature = 3.0;
  double awr_weight_cap = 100.0;

  void validate() const;
};

struct OptimConfig {
  AdamConfig adam;
  double grad_clip_norm = 10.0;  // applied to the world model and, separately, the policy
  double polyak = 0.99;
  int target_update_every = 2;
  double policy_std = 0.2;  // fixed std of the pre-squash Gaussian used by AWR

  void validate() const;
};

// Encoder, latent dynamics, reward head, Q ensemble, state-value head and
// policy prior, with slow target copies of the encoder and Q heads.
struct WorldModel {
  ModelDims dims;
  OptimConfig optim;

  MlpParams encoder;
  MlpParams dynamics;
  MlpParams reward;
  std::vector<MlpParams> q_heads;
  MlpParams value;
  MlpParams policy;

  MlpParams target_encoder;
  std::vector<MlpParams> target_q_heads;

  std::vector<AdamState> optimizers;  // one per online network, see online_networks()
  std::int64_t update_count = 0;

  WorldModel() = default;
  WorldModel(const ModelDims& dims, Rng& rng, const OptimConfig& optim = {});

  // Canonical order: encoder, dynamics, reward, value, policy, q_0 .. q_{N-1}.
  std::vector<MlpParams*> online_networks();
  std::vector<const MlpParams*> online_networks() const;
  std::size_t num_online_networks() const { return 5 + q_heads.size(); }

  // Copies online encoder and Q heads into their targets and resets optimizers.
  void sync_targets();
  void reset_optimizers();
  void validate() const;
};

inline constexpr std::size_t kEncoderNet = 0;
inline constexpr std::size_t kDynamicsNet = 1;
inline constexpr std::size_t kRewardNet = 2;
inline constexpr std::size_t kValueNet = 3;
inline constexpr std::size_t kPolicyNet = 4;
inline constexpr std::size_t kFirstQNet = 5;

using QPair = std::pair<int, int>;

// Two distinct head indices, uniformly over unordered pairs.
QPair draw_q_pair(int num_heads, Rng& rng);

// Single-sample operations.
Vector encode(const WorldModel& m, const Vector& state);
Vector next_latent(const WorldModel& m, const Vector& z, const Vector& action);
double predict_reward(const WorldModel& m, const Vector& z, const Vector& action);
Vector q_all(const WorldModel& m, const Vector& z, const Vector& action, bool use_target = false);
double q_estimate(const WorldModel& m, const Vector& z, const Vector& action, Rng& rng,
                  bool use_target = false);
double q_estimate(const WorldModel& m, const Vector& z, const Vector& action, QPair pair,
                  bool use_target = false);
double q_uncertainty(const WorldModel& m, const Vector& z, const Vector& action);
double state_value(const WorldModel& m, const Vector& z);
Vector policy_action(const WorldModel& m, const Vector& z, double noise_std, Rng& rng);
double td_target(double reward, const Vector& next_z, double discount, const WorldModel& m);

// Population standard deviation.
double ensemble_std(const Vector& values);

double expectile_loss(double q, double v, double tau);
double awr_weight(double q, double v, double beta, double cap);

// Batched counterparts; one sample per column.
Matrix encode_batch(const WorldModel& m, const Matrix& states);
Matrix next_latent_batch(const WorldModel& m, const Matrix& z, const Matrix& actions);
RowVector predict_reward_batch(const WorldModel& m, const Matrix& z, const Matrix& actions);
Matrix q_all_batch(const WorldModel& m, const Matrix& z, const Matrix& actions,
                   bool use_target = false);  // N x B
Matrix policy_mean_batch(const WorldModel& m, const Matrix& z);  // tanh-squashed

Vector concat(const Vector& z, const Vector& a);
Matrix concat_rows(const Matrix& z, const Matrix& a);

// Selects which terms enter the objective. Gradient tests switch terms off
// one at a time.
struct LossTerms {
  bool consistency = true;
  bool reward = true;
  bool q = true;
  bool value = true;
  bool awr = true;
};

// Quantities the objective treats as constants. Computing them once and
// feeding them back lets a finite-difference oracle honour stop-gradients.
struct StopGradValues {
  std::vector<Matrix> target_latents;    // sg(h_target(s'_t))
  std::vector<RowVector> td_targets;     // r_t + gamma (1 - terminal) V(sg(h(s'_t)))
  std::vector<Matrix> detached_latents;  // sg(z_t) fed to V and the policy
  std::vector<RowVector> target_q;       // pair-min of target heads at (sg(z_t), a_t)
  std::vector<RowVector> awr_weights;
  std::vector<QPair> pairs;
};

struct LossResult {
  double total = 0.0;
  double consistency = 0.0;
  double reward = 0.0;
  double q = 0.0;
  double value = 0.0;
  double awr = 0.0;
  double mean_q = 0.0;
  double mean_uncertainty = 0.0;
  std::vector<double> td_errors;    // per sample
  std::vector<GradBuffer> grads;    // canonical online-network order
  StopGradValues detached;
};

// Evaluates the joint objective on a batch. With `frozen`, stop-gradient
// quantities are taken from it instead of being recomputed.
LossResult compute_loss(const WorldModel& m, const SubsequenceBatch& batch,
                        const LossWeights& weights, Rng& rng, const LossTerms& terms = {},
                        const StopGradValues* frozen = nullptr, bool with_grads = true);

struct UpdateMetrics {
  double consistency = 0.0;
  double reward = 0.0;
  double q = 0.0;
  double value = 0.0;
  double awr = 0.0;
  double total = 0.0;
  double mean_q = 0.0;
  double mean_uncertainty = 0.0;
  double grad_norm = 0.0;
  std::vector<double> td_errors;
};

// One optimisation step on the joint objective, followed by a Polyak target
// update every optim.target_update_every steps. Throws NumericError (model
// untouched) if the loss or its gradient is not finite.
UpdateMetrics update(WorldModel& m, const SubsequenceBatch& batch, const LossWeights& weights,
                     Rng& rng);

void save_model(Checkpoint& ckpt, const WorldModel& m);
WorldModel load_model(const Checkpoint& ckpt);

}  // namespace wmft
