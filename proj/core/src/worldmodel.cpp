#include "wmft/worldmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wmft/checkpoint.hpp"
#include "wmft/errors.hpp"

namespace wmft {
namespace {

constexpr double kActionClip = 0.999;

void require_positive(int v, const char* name) {
  if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
}

void check_len(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(n));
  }
}

void check_rows(const Matrix& m, Eigen::Index n, const char* what) {
  if (m.rows() != n) {
    throw ShapeError(std::string(what) + ": rows " + std::to_string(m.rows()) + ", expected " +
                     std::to_string(n));
  }
}

const std::vector<MlpParams>& heads(const WorldModel& m, bool use_target) {
  return use_target ? m.target_q_heads : m.q_heads;
}

RowVector min_of_pair(const Matrix& q_values, QPair pair) {
  return q_values.row(pair.first).cwiseMin(q_values.row(pair.second));
}

}  // namespace

void ModelDims::validate() const {
  require_positive(state_dim, "state_dim");
  require_positive(action_dim, "action_dim");
  require_positive(latent_dim, "latent_dim");
  require_positive(hidden_dim, "hidden_dim");
  if (hidden_layers < 0) throw ConfigError("hidden_layers must be non-negative");
  if (num_q < 2) throw ConfigError("q ensemble needs at least two heads");
}

void LossWeights::validate() const {
  if (value_coef < 0 || reward_coef < 0 || consistency_coef < 0 || awr_temperature < 0) {
    throw ConfigError("loss coefficients must be non-negative");
  }
  if (!(expectile > 0.0 && expectile < 1.0)) throw ConfigError("expectile must lie in (0, 1)");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(temporal_coef > 0.0 && temporal_coef <= 1.0)) {
    throw ConfigError("temporal_coef must lie in (0, 1]");
  }
  if (!(awr_weight_cap > 0.0)) throw ConfigError("awr_weight_cap must be positive");
}

void OptimConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(polyak >= 0.0 && polyak <= 1.0)) throw ConfigError("polyak must lie in [0, 1]");
  if (target_update_every <= 0) throw ConfigError("target_update_every must be positive");
  if (!(policy_std > 0.0)) throw ConfigError("policy_std must be positive");
}

WorldModel::WorldModel(const ModelDims& d, Rng& rng, const OptimConfig& opt) : dims(d), optim(opt) {
  dims.validate();
  optim.validate();
  const int za = dims.latent_dim + dims.action_dim;
  encoder = make_mlp(dims.state_dim, dims.hidden_dim, dims.latent_dim, dims.hidden_layers, rng);
  dynamics = make_mlp(za, dims.hidden_dim, dims.latent_dim, dims.hidden_layers, rng);
  reward = make_mlp(za, dims.hidden_dim, 1, dims.hidden_layers, rng);
  value = make_mlp(dims.latent_dim, dims.hidden_dim, 1, dims.hidden_layers, rng);
  policy = make_mlp(dims.latent_dim, dims.hidden_dim, dims.action_dim, dims.hidden_layers, rng);
  for (int i = 0; i < dims.num_q; ++i) {
    q_heads.push_back(make_mlp(za, dims.hidden_dim, 1, dims.hidden_layers, rng));
  }
  sync_targets();
  reset_optimizers();
}

std::vector<MlpParams*> WorldModel::online_networks() {
  std::vector<MlpParams*> nets{&encoder, &dynamics, &reward, &value, &policy};
  for (auto& q : q_heads) nets.push_back(&q);
  return nets;
}

std::vector<const MlpParams*> WorldModel::online_networks() const {
  std::vector<const MlpParams*> nets{&encoder, &dynamics, &reward, &value, &policy};
  for (const auto& q : q_heads) nets.push_back(&q);
  return nets;
}

void WorldModel::sync_targets() {
  target_encoder = encoder;
  target_q_heads = q_heads;
}

void WorldModel::reset_optimizers() {
  optimizers.clear();
  for (const MlpParams* net : online_networks()) optimizers.emplace_back(*net, optim.adam);
}

void WorldModel::validate() const {
  dims.validate();
  if (q_heads.size() != static_cast<std::size_t>(dims.num_q) ||
      target_q_heads.size() != q_heads.size()) {
    throw ShapeError("q ensemble size does not match dims");
  }
  for (const MlpParams* net : online_networks()) check_params(*net);
  const Eigen::Index za = dims.latent_dim + dims.action_dim;
  if (encoder.input_dim() != dims.state_dim || encoder.output_dim() != dims.latent_dim) {
    throw ShapeError("encoder shape does not match dims");
  }
  if (dynamics.input_dim() != za || dynamics.output_dim() != dims.latent_dim) {
    throw ShapeError("dynamics shape does not match dims");
  }
  if (reward.input_dim() != za || reward.output_dim() != 1) {
    throw ShapeError("reward head shape does not match dims");
  }
  if (value.input_dim() != dims.latent_dim || value.output_dim() != 1) {
    throw ShapeError("value head shape does not match dims");
  }
  if (policy.input_dim() != dims.latent_dim || policy.output_dim() != dims.action_dim) {
    throw ShapeError("policy shape does not match dims");
  }
  for (const auto& q : q_heads) {
    if (q.input_dim() != za || q.output_dim() != 1) throw ShapeError("q head shape mismatch");
  }
  if (target_encoder.input_dim() != encoder.input_dim() ||
      target_encoder.output_dim() != encoder.output_dim()) {
    throw ShapeError("target encoder shape mismatch");
  }
}

QPair draw_q_pair(int num_heads, Rng& rng) {
  if (num_heads < 2) throw ConfigError("q_estimate needs at least two heads");
  std::uniform_int_distribution<int> first(0, num_heads - 1);
  std::uniform_int_distribution<int> second(0, num_heads - 2);
  const int i = first(rng);
  int j = second(rng);
  if (j >= i) ++j;
  return {i, j};
}

Vector concat(const Vector& z, const Vector& a) {
  Vector x(z.size() + a.size());
  x << z, a;
  return x;
}

Matrix concat_rows(const Matrix& z, const Matrix& a) {
  if (z.cols() != a.cols()) throw ShapeError("concat_rows: column count mismatch");
  Matrix x(z.rows() + a.rows(), z.cols());
  x << z, a;
  return x;
}

Vector encode(const WorldModel& m, const Vector& state) {
  check_len(state, m.dims.state_dim, "encode");
  return mlp_forward(m.encoder, state);
}

Vector next_latent(const WorldModel& m, const Vector& z, const Vector& action) {
  check_len(z, m.dims.latent_dim, "next_latent latent");
  check_len(action, m.dims.action_dim, "next_latent action");
  return mlp_forward(m.dynamics, concat(z, action));
}

double predict_reward(const WorldModel& m, const Vector& z, const Vector& action) {
  check_len(z, m.dims.latent_dim, "predict_reward latent");
  check_len(action, m.dims.action_dim, "predict_reward action");
  return mlp_forward(m.reward, concat(z, action))(0);
}

Vector q_all(const WorldModel& m, const Vector& z, const Vector& action, bool use_target) {
  check_len(z, m.dims.latent_dim, "q_all latent");
  check_len(action, m.dims.action_dim, "q_all action");
  const Vector x = concat(z, action);
  const auto& qs = heads(m, use_target);
  Vector out(static_cast<Eigen::Index>(qs.size()));
  for (std::size_t i = 0; i < qs.size(); ++i) out(static_cast<Eigen::Index>(i)) = mlp_forward(qs[i], x)(0);
  return out;
}

double q_estimate(const WorldModel& m, const Vector& z, const Vector& action, QPair pair,
                  bool use_target) {
  const Vector qs = q_all(m, z, action, use_target);
  if (qs.size() < 2) throw ConfigError("q_estimate needs at least two heads");
  return std::min(qs(pair.first), qs(pair.second));
}

double q_estimate(const WorldModel& m, const Vector& z, const Vector& action, Rng& rng,
                  bool use_target) {
  const QPair pair = draw_q_pair(static_cast<int>(heads(m, use_target).size()), rng);
  return q_estimate(m, z, action, pair, use_target);
}

double ensemble_std(const Vector& values) {
  if (values.size() <= 1) return 0.0;
  const double mean = values.mean();
  return std::sqrt((values.array() - mean).square().sum() / static_cast<double>(values.size()));
}

double q_uncertainty(const WorldModel& m, const Vector& z, const Vector& action) {
  return ensemble_std(q_all(m, z, action, false));
}

double state_value(const WorldModel& m, const Vector& z) {
  check_len(z, m.dims.latent_dim, "state_value");
  return mlp_forward(m.value, z)(0);
}

Vector policy_action(const WorldModel& m, const Vector& z, double noise_std, Rng& rng) {
  check_len(z, m.dims.latent_dim, "policy_action");
  if (noise_std < 0.0) throw ConfigError("policy_action: noise_std must be non-negative");
  Vector a = mlp_forward(m.policy, z).array().tanh();
  if (noise_std > 0.0) {
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) += noise_std * standard_normal(rng);
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

double td_target(double reward, const Vector& next_z, double discount, const WorldModel& m) {
  return reward + discount * state_value(m, next_z);
}

double expectile_loss(double q, double v, double tau) {
  const double diff = q - v;
  const double weight = diff < 0.0 ? 1.0 - tau : tau;
  return weight * diff * diff;
}

double awr_weight(double q, double v, double beta, double cap) {
  return std::min(std::exp(beta * (q - v)), cap);
}

Matrix encode_batch(const WorldModel& m, const Matrix& states) {
  check_rows(states, m.dims.state_dim, "encode_batch");
  return mlp_forward_batch(m.encoder, states);
}

Matrix next_latent_batch(const WorldModel& m, const Matrix& z, const Matrix& actions) {
  return mlp_forward_batch(m.dynamics, concat_rows(z, actions));
}

RowVector predict_reward_batch(const WorldModel& m, const Matrix& z, const Matrix& actions) {
  return mlp_forward_batch(m.reward, concat_rows(z, actions));
}

Matrix q_all_batch(const WorldModel& m, const Matrix& z, const Matrix& actions, bool use_target) {
  const Matrix x = concat_rows(z, actions);
  const auto& qs = heads(m, use_target);
  Matrix out(static_cast<Eigen::Index>(qs.size()), x.cols());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = mlp_forward_batch(qs[i], x);
  }
  return out;
}

Matrix policy_mean_batch(const WorldModel& m, const Matrix& z) {
  return mlp_forward_batch(m.policy, z).array().tanh();
}

void validate_batch(const SubsequenceBatch& batch) {
  const auto h = static_cast<std::size_t>(batch.horizon);
  if (batch.horizon < 1) throw ShapeError("batch horizon must be at least 1");
  if (batch.states.size() != h || batch.actions.size() != h || batch.rewards.size() != h ||
      batch.next_states.size() != h || batch.terminal.size() != h || batch.valid.size() != h) {
    throw ShapeError("batch per-step arrays do not match horizon");
  }
  const Eigen::Index b = batch.importance_weights.size();
  if (b == 0) throw ShapeError("batch is empty");
  for (std::size_t t = 0; t < h; ++t) {
    if (batch.states[t].cols() != b || batch.actions[t].cols() != b ||
        batch.rewards[t].cols() != b || batch.next_states[t].cols() != b ||
        batch.terminal[t].cols() != b || batch.valid[t].cols() != b) {
      throw ShapeError("batch step " + std::to_string(t) + " has inconsistent width");
    }
  }
}

LossResult compute_loss(const WorldModel& m, const SubsequenceBatch& batch,
                        const LossWeights& weights, Rng& rng, const LossTerms& terms,
                        const StopGradValues* frozen, bool with_grads) {
  validate_batch(batch);
  const int horizon = batch.horizon;
  const Eigen::Index bsz = batch.size();
  const int latent = m.dims.latent_dim;
  const int num_q = static_cast<int>(m.q_heads.size());
  const double inv_b = 1.0 / static_cast<double>(bsz);
  const double sigma = m.optim.policy_std;
  const double sigma2 = sigma * sigma;
  const double log_norm = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t t = 0; t < static_cast<std::size_t>(horizon); ++t) {
    check_rows(batch.states[t], m.dims.state_dim, "batch states");
    check_rows(batch.next_states[t], m.dims.state_dim, "batch next states");
    check_rows(batch.actions[t], m.dims.action_dim, "batch actions");
  }

  LossResult out;
  out.td_errors.assign(static_cast<std::size_t>(bsz), 0.0);
  StopGradValues& sg = out.detached;
  if (frozen != nullptr) sg = *frozen;

  ForwardTape enc_tape;
  std::vector<ForwardTape> dyn_tape(horizon), rew_tape(horizon), val_tape(horizon), pol_tape(horizon);
  std::vector<std::vector<ForwardTape>> q_tape(horizon, std::vector<ForwardTape>(num_q));

  // Upstream gradients of each network output, per step.
  std::vector<Matrix> d_next(horizon), d_policy(horizon);
  std::vector<RowVector> d_reward(horizon), d_value(horizon);
  std::vector<Matrix> d_q(horizon);

  Matrix z = mlp_forward_batch(m.encoder, batch.states[0], &enc_tape);
  const RowVector& isw = batch.importance_weights;
  std::vector<double> valid_steps(static_cast<std::size_t>(bsz), 0.0);
  double q_sum = 0.0, u_sum = 0.0, count = 0.0;
  double discount_t = 1.0;

  for (int t = 0; t < horizon; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& a = batch.actions[ts];
    const RowVector& mask = batch.valid[ts];
    const Matrix x = concat_rows(z, a);
    const RowVector scale = (discount_t * inv_b) * mask;  // rho^t * mask / B

    if (frozen == nullptr) {
      sg.target_latents.push_back(mlp_forward_batch(m.target_encoder, batch.next_states[ts]));
      const Matrix next_z = mlp_forward_batch(m.encoder, batch.next_states[ts]);
      const RowVector next_v = mlp_forward_batch(m.value, next_z);
      sg.td_targets.push_back(batch.rewards[ts] +
                              weights.discount *
                                  (RowVector::Ones(bsz) - batch.terminal[ts]).cwiseProduct(next_v));
      sg.detached_latents.push_back(z);
      const QPair pair = draw_q_pair(num_q, rng);
      sg.pairs.push_back(pair);
      const Matrix tq = q_all_batch(m, z, a, true);
      sg.target_q.push_back(min_of_pair(tq, pair));
      const RowVector v_now = mlp_forward_batch(m.value, z);
      RowVector w(bsz);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        w(b) = awr_weight(sg.target_q.back()(b), v_now(b), weights.awr_temperature,
                          weights.awr_weight_cap);
      }
      sg.awr_weights.push_back(w);
    }

    // Q ensemble regression toward the shared TD target.
    Matrix q_values(num_q, bsz);
    for (int i = 0; i < num_q; ++i) {
      q_values.row(i) = mlp_forward_batch(m.q_heads[static_cast<std::size_t>(i)], x,
                                          &q_tape[ts][static_cast<std::size_t>(i)]);
    }
    const RowVector& tdt = sg.td_targets[ts];
    {
      Matrix diff = q_values.rowwise() - tdt;
      const RowVector per_sample = diff.array().square().colwise().sum();
      out.q += (scale.cwiseProduct(isw)).dot(per_sample);
      d_q[ts] = (2.0 * weights.value_coef) *
                (diff.array().rowwise() * scale.cwiseProduct(isw).array()).matrix();
      for (Eigen::Index b = 0; b < bsz; ++b) {
        if (mask(b) <= 0.0) continue;
        out.td_errors[static_cast<std::size_t>(b)] += diff.col(b).cwiseAbs().mean();
        valid_steps[static_cast<std::size_t>(b)] += 1.0;
        q_sum += q_values.col(b).mean();
        const double mu = q_values.col(b).mean();
        u_sum += std::sqrt((q_values.col(b).array() - mu).square().sum() / num_q);
        count += 1.0;
      }
    }

    // Reward prediction.
    const RowVector r_hat = mlp_forward_batch(m.reward, x, &rew_tape[ts]);
    {
      const RowVector diff = r_hat - batch.rewards[ts];
      out.reward += scale.cwiseProduct(isw).dot(diff.cwiseProduct(diff));
      d_reward[ts] = (2.0 * weights.reward_coef) * diff.cwiseProduct(scale).cwiseProduct(isw);
    }

    // Latent consistency against the target encoder; the rollout stays open loop.
    Matrix z_next = mlp_forward_batch(m.dynamics, x, &dyn_tape[ts]);
    {
      const Matrix diff = z_next - sg.target_latents[ts];
      const RowVector per_sample = diff.array().square().colwise().sum() / latent;
      out.consistency += scale.cwiseProduct(isw).dot(per_sample);
      d_next[ts] = (2.0 * weights.consistency_coef / latent) *
                   (diff.array().rowwise() * scale.cwiseProduct(isw).array()).matrix();
    }

    // Expectile regression of V toward the target-head pair minimum.
    const Matrix& zd = sg.detached_latents[ts];
    const RowVector v = mlp_forward_batch(m.value, zd, &val_tape[ts]);
    {
      d_value[ts].resize(bsz);
      double acc = 0.0;
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const double q = sg.target_q[ts](b);
        const double s = scale(b) * isw(b);
        acc += s * expectile_loss(q, v(b), weights.expectile);
        const double diff = q - v(b);
        const double wgt = diff < 0.0 ? 1.0 - weights.expectile : weights.expectile;
        d_value[ts](b) = weights.value_coef * s * (-2.0 * wgt * diff);
      }
      out.value += acc;
    }

    // Advantage-weighted log-likelihood of dataset actions.
    const Matrix mu = mlp_forward_batch(m.policy, zd, &pol_tape[ts]);
    {
      d_policy[ts].resize(mu.rows(), bsz);
      double acc = 0.0;
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const double w = sg.awr_weights[ts](b);
        double logp = 0.0;
        for (Eigen::Index k = 0; k < mu.rows(); ++k) {
          const double ac = std::clamp(a(k, b), -kActionClip, kActionClip);
          const double u = std::atanh(ac);
          const double du = u - mu(k, b);
          logp += -0.5 * du * du / sigma2 + log_norm - std::log(1.0 - ac * ac);
          d_policy[ts](k, b) = scale(b) * (-w) * du / sigma2;
        }
        acc += scale(b) * (-w * logp);
      }
      out.awr += acc;
    }

    z = std::move(z_next);
    discount_t *= weights.temporal_coef;
  }

  for (std::size_t b = 0; b < out.td_errors.size(); ++b) {
    if (valid_steps[b] > 0.0) out.td_errors[b] /= valid_steps[b];
  }
  out.mean_q = count > 0 ? q_sum / count : 0.0;
  out.mean_uncertainty = count > 0 ? u_sum / count : 0.0;
  out.total = (terms.consistency ? weights.consistency_coef * out.consistency : 0.0) +
              (terms.reward ? weights.reward_coef * out.reward : 0.0) +
              (terms.q ? weights.value_coef * out.q : 0.0) +
              (terms.value ? weights.value_coef * out.value : 0.0) + (terms.awr ? out.awr : 0.0);

  if (!with_grads) return out;

  for (const MlpParams* net : m.online_networks()) out.grads.push_back(zeros_like(*net));

  // Backpropagate through the latent rollout, last step first.
  Matrix dz = Matrix::Zero(latent, bsz);
  bool dz_live = false;
  for (int t = horizon - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    Matrix dx = Matrix::Zero(latent + m.dims.action_dim, bsz);
    bool dx_live = false;

    Matrix dnext = Matrix::Zero(latent, bsz);
    bool dnext_live = false;
    if (terms.consistency) {
      dnext += d_next[ts];
      dnext_live = true;
    }
    if (dz_live) {
      dnext += dz;
      dnext_live = true;
    }
    if (dnext_live) {
      dx += mlp_backward_batch(m.dynamics, dyn_tape[ts], dnext, out.grads[kDynamicsNet]);
      dx_live = true;
    }
    if (terms.reward) {
      dx += mlp_backward_batch(m.reward, rew_tape[ts], d_reward[ts], out.grads[kRewardNet]);
      dx_live = true;
    }
    if (terms.q) {
      for (int i = 0; i < num_q; ++i) {
        const auto is = static_cast<std::size_t>(i);
        dx += mlp_backward_batch(m.q_heads[is], q_tape[ts][is], d_q[ts].row(i),
                                 out.grads[kFirstQNet + is]);
      }
      dx_live = true;
    }
    if (terms.value) {
      mlp_backward_batch(m.value, val_tape[ts], d_value[ts], out.grads[kValueNet]);
    }
    if (terms.awr) {
      mlp_backward_batch(m.policy, pol_tape[ts], d_policy[ts], out.grads[kPolicyNet]);
    }
    if (dx_live) {
      dz = dx.topRows(latent);
      dz_live = true;
    } else {
      dz.setZero();
      dz_live = false;
    }
  }
  if (dz_live) mlp_backward_batch(m.encoder, enc_tape, dz, out.grads[kEncoderNet]);
  return out;
}

UpdateMetrics update(WorldModel& m, const SubsequenceBatch& batch, const LossWeights& weights,
                     Rng& rng) {
  weights.validate();
  LossResult r = compute_loss(m, batch, weights, rng);
  if (!std::isfinite(r.total)) throw NumericError("update: loss is not finite, update aborted");
  for (const auto& g : r.grads) {
    if (!g.all_finite()) throw NumericError("update: gradient is not finite, update aborted");
  }
  // The policy prior is clipped on its own so the advantage-weighted term
  // cannot crowd the world-model gradients out of the shared norm budget.
  std::swap(r.grads[kPolicyNet], r.grads.back());
  const std::span<GradBuffer> model_grads(r.grads.data(), r.grads.size() - 1);
  const double norm = clip_global_norm(model_grads, m.optim.grad_clip_norm);
  clip_global_norm(std::span<GradBuffer>(&r.grads.back(), 1), m.optim.grad_clip_norm);
  std::swap(r.grads[kPolicyNet], r.grads.back());

  auto nets = m.online_networks();
  if (m.optimizers.size() != nets.size()) m.reset_optimizers();
  for (std::size_t k = 0; k < nets.size(); ++k) adam_step(m.optimizers[k], *nets[k], r.grads[k]);

  m.update_count += 1;
  if (m.update_count % m.optim.target_update_every == 0) {
    polyak_update(m.target_encoder, m.encoder, m.optim.polyak);
    for (std::size_t i = 0; i < m.q_heads.size(); ++i) {
      polyak_update(m.target_q_heads[i], m.q_heads[i], m.optim.polyak);
    }
  }

  UpdateMetrics metrics;
  metrics.consistency = r.consistency;
  metrics.reward = r.reward;
  metrics.q = r.q;
  metrics.value = r.value;
  metrics.awr = r.awr;
  metrics.total = r.total;
  metrics.mean_q = r.mean_q;
  metrics.mean_uncertainty = r.mean_uncertainty;
  metrics.grad_norm = norm;
  metrics.td_errors = std::move(r.td_errors);
  return metrics;
}

namespace {

const char* kNetNames[] = {"encoder", "dynamics", "reward", "value", "policy"};

std::string net_name(std::size_t k) {
  return k < kFirstQNet ? kNetNames[k] : "q" + std::to_string(k - kFirstQNet);
}

}  // namespace

void save_model(Checkpoint& ckpt, const WorldModel& m) {
  ckpt.put_int("dims.state", m.dims.state_dim);
  ckpt.put_int("dims.action", m.dims.action_dim);
  ckpt.put_int("dims.latent", m.dims.latent_dim);
  ckpt.put_int("dims.hidden", m.dims.hidden_dim);
  ckpt.put_int("dims.hidden_layers", m.dims.hidden_layers);
  ckpt.put_int("dims.num_q", m.dims.num_q);
  ckpt.put_real("optim.lr", m.optim.adam.learning_rate);
  ckpt.put_real("optim.beta1", m.optim.adam.beta1);
  ckpt.put_real("optim.beta2", m.optim.adam.beta2);
  ckpt.put_real("optim.epsilon", m.optim.adam.epsilon);
  ckpt.put_real("optim.grad_clip", m.optim.grad_clip_norm);
  ckpt.put_real("optim.polyak", m.optim.polyak);
  ckpt.put_int("optim.target_update_every", m.optim.target_update_every);
  ckpt.put_real("optim.policy_std", m.optim.policy_std);
  ckpt.put_int("model.update_count", m.update_count);

  const auto nets = m.online_networks();
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const std::string name = "net." + net_name(k);
    put_mlp(ckpt, name, *nets[k]);
    if (k < m.optimizers.size()) {
      put_grads(ckpt, "adam." + net_name(k) + ".m", m.optimizers[k].first_moment);
      put_grads(ckpt, "adam." + net_name(k) + ".v", m.optimizers[k].second_moment);
      ckpt.put_int("adam." + net_name(k) + ".step", m.optimizers[k].step);
    }
  }
  put_mlp(ckpt, "target.encoder", m.target_encoder);
  for (std::size_t i = 0; i < m.target_q_heads.size(); ++i) {
    put_mlp(ckpt, "target.q" + std::to_string(i), m.target_q_heads[i]);
  }
}

WorldModel load_model(const Checkpoint& ckpt) {
  WorldModel m;
  m.dims.state_dim = static_cast<int>(ckpt.integer("dims.state"));
  m.dims.action_dim = static_cast<int>(ckpt.integer("dims.action"));
  m.dims.latent_dim = static_cast<int>(ckpt.integer("dims.latent"));
  m.dims.hidden_dim = static_cast<int>(ckpt.integer("dims.hidden"));
  m.dims.hidden_layers = static_cast<int>(ckpt.integer("dims.hidden_layers"));
  m.dims.num_q = static_cast<int>(ckpt.integer("dims.num_q"));
  m.optim.adam.learning_rate = ckpt.real("optim.lr");
  m.optim.adam.beta1 = ckpt.real("optim.beta1");
  m.optim.adam.beta2 = ckpt.real("optim.beta2");
  m.optim.adam.epsilon = ckpt.real("optim.epsilon");
  m.optim.grad_clip_norm = ckpt.real("optim.grad_clip");
  m.optim.polyak = ckpt.real("optim.polyak");
  m.optim.target_update_every = static_cast<int>(ckpt.integer("optim.target_update_every"));
  m.optim.policy_std = ckpt.real("optim.policy_std");
  m.update_count = ckpt.integer("model.update_count");

  m.encoder = get_mlp(ckpt, "net.encoder");
  m.dynamics = get_mlp(ckpt, "net.dynamics");
  m.reward = get_mlp(ckpt, "net.reward");
  m.value = get_mlp(ckpt, "net.value");
  m.policy = get_mlp(ckpt, "net.policy");
  for (int i = 0; i < m.dims.num_q; ++i) m.q_heads.push_back(get_mlp(ckpt, "net.q" + std::to_string(i)));
  m.target_encoder = get_mlp(ckpt, "target.encoder");
  for (int i = 0; i < m.dims.num_q; ++i) {
    m.target_q_heads.push_back(get_mlp(ckpt, "target.q" + std::to_string(i)));
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint model is inconsistent: ") + e.what());
  }

  const auto nets = m.online_networks();
  for (std::size_t k = 0; k < nets.size(); ++k) {
    AdamState st(*nets[k], m.optim.adam);
    const std::string p = "adam." + net_name(k);
    if (ckpt.has(p + ".step")) {
      st.first_moment = get_grads(ckpt, p + ".m");
      st.second_moment = get_grads(ckpt, p + ".v");
      st.step = ckpt.integer(p + ".step");
    }
    m.optimizers.push_back(std::move(st));
  }
  return m;
}

}  // namespace wmft
