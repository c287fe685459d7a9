#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wmft/rng.hpp"

namespace wmft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { kElu, kIdentity };

struct Layer {
  Matrix weights;  // out x in
  Vector biases;   // out
};

// A fully connected network. Every layer but the last is followed by the
// hidden activation; the last layer is affine.
struct MlpParams {
  std::vector<Layer> layers;
  Activation activation = Activation::kElu;

  Eigen::Index input_dim() const { return layers.front().weights.cols(); }
  Eigen::Index output_dim() const { return layers.back().weights.rows(); }
  std::size_t num_parameters() const;
};

// Gradient storage shaped like an MlpParams.
struct GradBuffer {
  std::vector<Layer> layers;

  void set_zero();
  double squared_norm() const;
  bool all_finite() const;
  void scale(double factor);
};

GradBuffer zeros_like(const MlpParams& params);

// Layer sizes {in, hidden..., out}, weights and biases uniform in
// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
MlpParams make_mlp(std::span<const int> sizes, Rng& rng,
                   Activation activation = Activation::kElu);
MlpParams make_mlp(int input_dim, int hidden_dim, int output_dim, int hidden_layers,
                   Rng& rng, Activation activation = Activation::kElu);
MlpParams zero_mlp(std::span<const int> sizes, Activation activation = Activation::kElu);

void check_params(const MlpParams& params);

// Per-layer intermediates recorded by a batched forward pass.
struct ForwardTape {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> activations;  // pre-activation of each layer
};

Vector mlp_forward(const MlpParams& params, const Vector& input);

// Columns of `inputs` are independent samples.
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs,
                         ForwardTape* tape = nullptr);

// Accumulates d(sum(output .* output_grad))/d(params) into `grads` and returns
// the gradient with respect to the inputs recorded in `tape`.
Matrix mlp_backward_batch(const MlpParams& params, const ForwardTape& tape,
                          const Matrix& output_grad, GradBuffer& grads);

struct MlpGradient {
  GradBuffer params;
  Vector input;
};

MlpGradient mlp_backward(const MlpParams& params, const Vector& input,
                         const Vector& output_grad);

// Central differences, one scalar parameter at a time. Test oracle only.
GradBuffer finite_diff_grad(const std::function<double(const MlpParams&)>& loss_fn,
                            const MlpParams& params, double eps);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  GradBuffer first_moment;
  GradBuffer second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const MlpParams& params, AdamConfig cfg = {});
};

// Bias-corrected Adam. Refuses (NumericError, nothing modified) when any
// gradient entry is non-finite.
void adam_step(AdamState& state, MlpParams& params, const GradBuffer& grads);

// target <- rho * target + (1 - rho) * online
void polyak_update(MlpParams& target, const MlpParams& online, double rho);

// Rescales all buffers jointly so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<GradBuffer> grads, double max_norm);

}  // namespace wmft
