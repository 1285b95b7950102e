#pragma once

// Dense fp64 matrices with a small reverse-mode tape over a fixed set of
// layers: linear, bias, ReLU, max pooling, concatenation, row gather and the
// graph convolution Y = ReLU(A X W).

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rigcn/random.hpp"

namespace rigcn::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Matrix& m);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns every learnable tensor of a model; layers refer to entries by slot.
class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix value);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  std::size_t add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
  std::size_t add_zeros(std::string name, std::size_t rows, std::size_t cols);

  Parameter& operator[](std::size_t slot) { return params_[slot]; }
  const Parameter& operator[](std::size_t slot) const { return params_[slot]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

/// Per-slot gradient buffers, kept apart from the store so that independent
/// samples can be differentiated concurrently and reduced in a fixed order.
struct GradientBuffer {
  std::vector<Matrix> grads;  // empty matrix = no contribution

  void add_to(ParameterStore& params, double scale = 1.0) const;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(const ParameterStore& params, std::size_t slot);
  /// Leaf that receives a gradient but is not a parameter (used by gradient checks on inputs).
  Var variable(Matrix value);

  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Zero-sized until backward reached the node.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Adds `g` into the gradient of `v` (ignored for constants).
  void accumulate(Var v, const Matrix& g);

  void backward(Var root, const Matrix& seed);

  GradientBuffer parameter_gradients(std::size_t slot_count) const;
  void accumulate_into(ParameterStore& params) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    std::size_t slot = static_cast<std::size_t>(-1);
  };
  std::vector<Node> nodes_;
};

/// Y = X W. Backward: dW += X^T dY, dX += dY W^T.
Var linear(Tape& tape, Var x, Var w);
/// Adds a 1 x c row to every row.
Var add_bias(Tape& tape, Var x, Var bias);
/// max(0, x); the subgradient at 0 is 0.
Var relu(Tape& tape, Var x);
/// Column-wise max over rows; ties route the gradient to the lowest row.
Var maxpool_rows(Tape& tape, Var x);
/// Column-wise max within consecutive row segments [offsets[i], offsets[i+1]).
Var segment_maxpool(Tape& tape, Var x, std::span<const std::size_t> offsets);
Var concat_cols(Tape& tape, std::span<const Var> parts);
Var concat_cols(Tape& tape, Var a, Var b);
/// Rows of x picked by `rows` (repeats allowed); backward scatter-adds.
Var gather_rows(Tape& tape, Var x, std::span<const std::size_t> rows);
/// A X for a constant square A.
Var left_multiply(Tape& tape, const Matrix& a, Var x);
/// ReLU(A X W).
Var gcn_layer(Tape& tape, const Matrix& a_hat, Var x, Var w);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // 1 x C
};

/// Numerically stable -log softmax(logits)[label] and its gradient.
LossResult softmax_cross_entropy(const Matrix& logits, std::size_t label);

/// Hidden layers linear + bias + ReLU, last layer linear + bias.
struct Mlp {
  std::vector<std::size_t> weights;
  std::vector<std::size_t> biases;

  static Mlp create(ParameterStore& params, const std::string& name,
                    std::span<const std::size_t> widths, Rng& rng);

  Var forward(Tape& tape, const ParameterStore& params, Var x) const;
  std::size_t input_width(const ParameterStore& params) const;
  std::size_t output_width(const ParameterStore& params) const;
};

enum class OptimizerKind { adam, sgd };

OptimizerKind parse_optimizer_kind(const std::string& name);
const char* to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {});

  /// Applies one update from the accumulated gradients, then zeroes them.
  /// Throws TrainingDivergenceError naming the first non-finite gradient.
  void step(ParameterStore& params);
  /// Takes effect from the next step; moment estimates are kept.
  void set_learning_rate(double learning_rate);

  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

struct GradientCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::vector<GradientCheckEntry> blocks;  // one per parameter, store order
};

/// `loss(params, with_grad)` must return the loss and, when `with_grad`,
/// leave analytic gradients in `params[*].grad`.
using LossFunction = std::function<double(ParameterStore& params, bool with_grad)>;

/// Central differences against analytic gradients; per-entry error is
/// |a - f| / max(1, |a|, |f|).
GradientCheckReport gradient_check(const LossFunction& loss, ParameterStore& params,
                                   double epsilon = 1e-6);

}  // namespace rigcn::nn
