#include "wmft/netcore.hpp"

#include <cmath>
#include <string>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void apply_activation(Activation act, Matrix& x) {
  if (act == Activation::kElu) {
    x = (x.array() > 0.0).select(x.array(), x.array().min(0.0).exp() - 1.0).matrix();
  }
}

// Multiplies `grad` in place by the activation derivative at `pre`.
void apply_activation_grad(Activation act, const Matrix& pre, Matrix& grad) {
  if (act == Activation::kElu) {
    grad.array() *= (pre.array() > 0.0).select(1.0, pre.array().min(0.0).exp());
  }
}

void check_same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) {
    throw ShapeError("network depth mismatch: " + std::to_string(a.layers.size()) + " vs " +
                     std::to_string(b.layers.size()));
  }
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.weights.rows() != lb.weights.rows() || la.weights.cols() != lb.weights.cols() ||
        la.biases.size() != lb.biases.size()) {
      throw ShapeError("layer " + std::to_string(i) + " shape mismatch: " +
                       shape_str(la.weights.rows(), la.weights.cols()) + " vs " +
                       shape_str(lb.weights.rows(), lb.weights.cols()));
    }
  }
}

void check_grad_shape(const MlpParams& p, const GradBuffer& g) {
  if (p.layers.size() != g.layers.size()) throw ShapeError("gradient depth mismatch");
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    if (p.layers[i].weights.rows() != g.layers[i].weights.rows() ||
        p.layers[i].weights.cols() != g.layers[i].weights.cols() ||
        p.layers[i].biases.size() != g.layers[i].biases.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(i));
    }
  }
}

}  // namespace

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

void GradBuffer::set_zero() {
  for (auto& l : layers) {
    l.weights.setZero();
    l.biases.setZero();
  }
}

double GradBuffer::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weights.squaredNorm() + l.biases.squaredNorm();
  return s;
}

bool GradBuffer::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
  }
  return true;
}

void GradBuffer::scale(double factor) {
  for (auto& l : layers) {
    l.weights *= factor;
    l.biases *= factor;
  }
}

GradBuffer zeros_like(const MlpParams& params) {
  GradBuffer g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()),
                        Vector::Zero(l.biases.size())});
  }
  return g;
}

MlpParams make_mlp(std::span<const int> sizes, Rng& rng, Activation activation) {
  if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  MlpParams p;
  p.activation = activation;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    if (fan_in <= 0 || fan_out <= 0) throw ShapeError("layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Matrix(fan_out, fan_in), Vector(fan_out)};
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases(r) = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams make_mlp(int input_dim, int hidden_dim, int output_dim, int hidden_layers, Rng& rng,
                   Activation activation) {
  std::vector<int> sizes{input_dim};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden_dim);
  sizes.push_back(output_dim);
  return make_mlp(sizes, rng, activation);
}

MlpParams zero_mlp(std::span<const int> sizes, Activation activation) {
  if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  MlpParams p;
  p.activation = activation;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    p.layers.push_back({Matrix::Zero(sizes[i + 1], sizes[i]), Vector::Zero(sizes[i + 1])});
  }
  return p;
}

void check_params(const MlpParams& params) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (l.biases.size() != l.weights.rows()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias length does not match rows");
    }
    if (i > 0 && l.weights.cols() != params.layers[i - 1].weights.rows()) {
      throw ShapeError("layer " + std::to_string(i) + ": input width " +
                       std::to_string(l.weights.cols()) + " does not match previous output " +
                       std::to_string(params.layers[i - 1].weights.rows()));
    }
  }
}

Vector mlp_forward(const MlpParams& params, const Vector& input) {
  if (input.size() != params.input_dim()) {
    throw ShapeError("mlp_forward: input length " + std::to_string(input.size()) +
                     ", expected " + std::to_string(params.input_dim()));
  }
  Vector x = input;
  const std::size_t n = params.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = params.layers[i];
    Vector y = l.weights * x + l.biases;
    if (i + 1 < n && params.activation == Activation::kElu) {
      for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = y(k) > 0.0 ? y(k) : std::expm1(y(k));
    }
    x = std::move(y);
  }
  return x;
}

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs, ForwardTape* tape) {
  if (inputs.rows() != params.input_dim()) {
    throw ShapeError("mlp_forward_batch: input rows " + std::to_string(inputs.rows()) +
                     ", expected " + std::to_string(params.input_dim()));
  }
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->activations.clear();
  }
  Matrix x = inputs;
  const std::size_t n = params.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = params.layers[i];
    Matrix y = l.weights * x;
    y.colwise() += l.biases;
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(x));
      tape->activations.push_back(y);
    }
    if (i + 1 < n) apply_activation(params.activation, y);
    x = std::move(y);
  }
  return x;
}

Matrix mlp_backward_batch(const MlpParams& params, const ForwardTape& tape,
                          const Matrix& output_grad, GradBuffer& grads) {
  const std::size_t n = params.layers.size();
  if (tape.inputs.size() != n || tape.activations.size() != n) {
    throw ShapeError("mlp_backward_batch: tape does not match network depth");
  }
  check_grad_shape(params, grads);
  if (output_grad.rows() != params.output_dim() ||
      output_grad.cols() != tape.activations.back().cols()) {
    throw ShapeError("mlp_backward_batch: output gradient is " +
                     shape_str(output_grad.rows(), output_grad.cols()) + ", expected " +
                     shape_str(params.output_dim(), tape.activations.back().cols()));
  }
  Matrix delta = output_grad;
  for (std::size_t k = n; k-- > 0;) {
    if (k + 1 < n) apply_activation_grad(params.activation, tape.activations[k], delta);
    grads.layers[k].weights.noalias() += delta * tape.inputs[k].transpose();
    grads.layers[k].biases.noalias() += delta.rowwise().sum();
    Matrix upstream = params.layers[k].weights.transpose() * delta;
    delta = std::move(upstream);
  }
  return delta;
}

MlpGradient mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_grad) {
  if (input.size() != params.input_dim() || output_grad.size() != params.output_dim()) {
    throw ShapeError("mlp_backward: input or output gradient length mismatch");
  }
  ForwardTape tape;
  mlp_forward_batch(params, Matrix(input), &tape);
  MlpGradient out{zeros_like(params), Vector()};
  Matrix dx = mlp_backward_batch(params, tape, Matrix(output_grad), out.params);
  out.input = dx.col(0);
  return out;
}

GradBuffer finite_diff_grad(const std::function<double(const MlpParams&)>& loss_fn,
                            const MlpParams& params, double eps) {
  if (!(eps > 0.0)) throw NumericError("finite_diff_grad: eps must be positive");
  GradBuffer g = zeros_like(params);
  MlpParams probe = params;
  auto eval = [&](double& slot, double base, double& out_slot) {
    slot = base + eps;
    const double up = loss_fn(probe);
    slot = base - eps;
    const double down = loss_fn(probe);
    slot = base;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: loss is not finite");
    }
    out_slot = (up - down) / (2.0 * eps);
  };
  for (std::size_t i = 0; i < probe.layers.size(); ++i) {
    auto& w = probe.layers[i].weights;
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        eval(w(r, c), params.layers[i].weights(r, c), g.layers[i].weights(r, c));
      }
    }
    auto& b = probe.layers[i].biases;
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      eval(b(r), params.layers[i].biases(r), g.layers[i].biases(r));
    }
  }
  return g;
}

AdamState::AdamState(const MlpParams& params, AdamConfig cfg)
    : config(cfg), first_moment(zeros_like(params)), second_moment(zeros_like(params)) {}

void adam_step(AdamState& state, MlpParams& params, const GradBuffer& grads) {
  check_grad_shape(params, grads);
  check_grad_shape(params, state.first_moment);
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient, update refused");

  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double step_size = cfg.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + cfg.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weights, state.first_moment.layers[i].weights,
           state.second_moment.layers[i].weights, grads.layers[i].weights);
    update(params.layers[i].biases, state.first_moment.layers[i].biases,
           state.second_moment.layers[i].biases, grads.layers[i].biases);
  }
}

void polyak_update(MlpParams& target, const MlpParams& online, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw NumericError("polyak_update: rho must lie in [0, 1]");
  check_same_shape(target, online);
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    target.layers[i].weights = rho * target.layers[i].weights + (1.0 - rho) * online.layers[i].weights;
    target.layers[i].biases = rho * target.layers[i].biases + (1.0 - rho) * online.layers[i].biases;
  }
}

double clip_global_norm(std::span<GradBuffer> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squared_norm();
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads) g.scale(factor);
  }
  return norm;
}

}  // namespace wmft
