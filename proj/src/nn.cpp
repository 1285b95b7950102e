#include "rigcn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "rigcn/errors.hpp"

namespace rigcn::nn {

std::string shape_string(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, Matrix value) {
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParameterStore::add_glorot(std::string name, std::size_t fan_in,
                                       std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return add(std::move(name), std::move(w));
}

std::size_t ParameterStore::add_zeros(std::string name, std::size_t rows, std::size_t cols) {
  return add(std::move(name),
             Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

void GradientBuffer::add_to(ParameterStore& params, double scale) const {
  for (std::size_t s = 0; s < grads.size(); ++s) {
    if (grads[s].size() == 0) continue;
    if (scale == 1.0) {
      params[s].grad += grads[s];
    } else {
      params[s].grad += scale * grads[s];
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, false});
  return {nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, true});
  return {nodes_.size() - 1};
}

Var Tape::parameter(const ParameterStore& params, std::size_t slot) {
  nodes_.push_back({params[slot].value, {}, {}, true, slot});
  return {nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (auto v : inputs) needs = needs || nodes_[v.id].requires_grad;
  Node node{std::move(value), {}, {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var root, const Matrix& seed) {
  if (seed.rows() != value(root).rows() || seed.cols() != value(root).cols()) {
    throw ShapeError("backward seed " + shape_string(seed) + " does not match output " +
                     shape_string(value(root)));
  }
  accumulate(root, seed);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.size() == 0) continue;
    // The closure may append to other nodes' gradients but never to its own.
    node.backward(*this, node.grad);
  }
}

GradientBuffer Tape::parameter_gradients(std::size_t slot_count) const {
  GradientBuffer buffer;
  buffer.grads.resize(slot_count);
  for (const auto& node : nodes_) {
    if (node.slot == static_cast<std::size_t>(-1) || node.grad.size() == 0) continue;
    Matrix& dst = buffer.grads[node.slot];
    if (dst.size() == 0) {
      dst = node.grad;
    } else {
      dst += node.grad;
    }
  }
  return buffer;
}

void Tape::accumulate_into(ParameterStore& params) const {
  parameter_gradients(params.size()).add_to(params);
}

// ---------------------------------------------------------------------------
// Layers

Var linear(Tape& tape, Var x, Var w) {
  const Matrix& xv = tape.value(x);
  const Matrix& wv = tape.value(w);
  if (xv.cols() != wv.rows()) {
    throw ShapeError("linear: input " + shape_string(xv) + " vs weight " + shape_string(wv));
  }
  return tape.record(xv * wv, {x, w}, [x, w](Tape& t, const Matrix& dy) {
    if (t.requires_grad(w)) t.accumulate(w, t.value(x).transpose() * dy);
    if (t.requires_grad(x)) t.accumulate(x, dy * t.value(w).transpose());
  });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  const Matrix& xv = tape.value(x);
  const Matrix& bv = tape.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_bias: input " + shape_string(xv) + " vs bias " + shape_string(bv));
  }
  Matrix y = xv.rowwise() + bv.row(0);
  return tape.record(std::move(y), {x, bias}, [x, bias](Tape& t, const Matrix& dy) {
    if (t.requires_grad(bias)) t.accumulate(bias, dy.colwise().sum());
    t.accumulate(x, dy);
  });
}

Var relu(Tape& tape, Var x) {
  Matrix y = tape.value(x).cwiseMax(0.0);
  return tape.record(std::move(y), {x}, [x](Tape& t, const Matrix& dy) {
    const Matrix& xv = t.value(x);
    t.accumulate(x, (xv.array() > 0.0).select(dy, 0.0));
  });
}

Var maxpool_rows(Tape& tape, Var x) {
  const auto rows = static_cast<std::size_t>(tape.value(x).rows());
  if (rows == 0 || tape.value(x).cols() == 0) {
    throw InvalidArgumentError("maxpool_rows: empty matrix " + shape_string(tape.value(x)));
  }
  const std::size_t offsets[] = {0, rows};
  return segment_maxpool(tape, x, offsets);
}

Var segment_maxpool(Tape& tape, Var x, std::span<const std::size_t> offsets) {
  const Matrix& xv = tape.value(x);
  if (offsets.size() < 2 || offsets.front() != 0 ||
      offsets.back() != static_cast<std::size_t>(xv.rows())) {
    throw InvalidArgumentError("segment_maxpool: offsets do not cover " + shape_string(xv));
  }
  const auto segments = static_cast<Eigen::Index>(offsets.size() - 1);
  const auto cols = xv.cols();
  Matrix y(segments, cols);
  auto argmax = std::make_shared<Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(segments, cols);
  for (Eigen::Index s = 0; s < segments; ++s) {
    const auto begin = static_cast<Eigen::Index>(offsets[static_cast<std::size_t>(s)]);
    const auto end = static_cast<Eigen::Index>(offsets[static_cast<std::size_t>(s) + 1]);
    if (end <= begin) throw InvalidArgumentError("segment_maxpool: empty segment");
    for (Eigen::Index c = 0; c < cols; ++c) {
      Eigen::Index best = begin;
      for (Eigen::Index r = begin + 1; r < end; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;
      }
      y(s, c) = xv(best, c);
      (*argmax)(s, c) = best;
    }
  }
  return tape.record(std::move(y), {x}, [x, argmax](Tape& t, const Matrix& dy) {
    Matrix dx = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
    for (Eigen::Index s = 0; s < dy.rows(); ++s) {
      for (Eigen::Index c = 0; c < dy.cols(); ++c) dx((*argmax)(s, c), c) += dy(s, c);
    }
    t.accumulate(x, dx);
  });
}

Var concat_cols(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgumentError("concat_cols: nothing to concatenate");
  const auto rows = tape.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (auto p : parts) {
    if (tape.value(p).rows() != rows) {
      throw ShapeError("concat_cols: " + shape_string(tape.value(parts[0])) + " vs " +
                       shape_string(tape.value(p)));
    }
    cols += tape.value(p).cols();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (auto p : parts) {
    y.middleCols(at, tape.value(p).cols()) = tape.value(p);
    at += tape.value(p).cols();
  }
  auto inputs = std::make_shared<std::vector<Var>>(parts.begin(), parts.end());
  return tape.record(std::move(y), parts, [inputs](Tape& t, const Matrix& dy) {
    Eigen::Index offset = 0;
    for (auto p : *inputs) {
      const auto c = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, dy.middleCols(offset, c));
      offset += c;
    }
  });
}

Var concat_cols(Tape& tape, Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(tape, parts);
}

Var gather_rows(Tape& tape, Var x, std::span<const std::size_t> rows) {
  const Matrix& xv = tape.value(x);
  Matrix y(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(xv.rows())) {
      throw InvalidArgumentError("gather_rows: row index out of range");
    }
    y.row(static_cast<Eigen::Index>(i)) = xv.row(static_cast<Eigen::Index>(rows[i]));
  }
  auto index = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return tape.record(std::move(y), {x}, [x, index](Tape& t, const Matrix& dy) {
    Matrix dx = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
    for (std::size_t i = 0; i < index->size(); ++i) {
      dx.row(static_cast<Eigen::Index>((*index)[i])) += dy.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(x, dx);
  });
}

Var left_multiply(Tape& tape, const Matrix& a, Var x) {
  const Matrix& xv = tape.value(x);
  if (a.cols() != xv.rows()) {
    throw ShapeError("left_multiply: " + shape_string(a) + " vs " + shape_string(xv));
  }
  auto held = std::make_shared<Matrix>(a);
  return tape.record(a * xv, {x}, [x, held](Tape& t, const Matrix& dy) {
    t.accumulate(x, held->transpose() * dy);
  });
}

Var gcn_layer(Tape& tape, const Matrix& a_hat, Var x, Var w) {
  const Matrix& xv = tape.value(x);
  const Matrix& wv = tape.value(w);
  if (a_hat.rows() != a_hat.cols() || a_hat.cols() != xv.rows() || xv.cols() != wv.rows()) {
    throw ShapeError("gcn_layer: A " + shape_string(a_hat) + ", X " + shape_string(xv) +
                     ", W " + shape_string(wv));
  }
  return relu(tape, linear(tape, left_multiply(tape, a_hat, x), w));
}

LossResult softmax_cross_entropy(const Matrix& logits, std::size_t label) {
  if (logits.rows() != 1 || logits.cols() == 0) {
    throw ShapeError("softmax_cross_entropy: expected a row vector, got " + shape_string(logits));
  }
  if (label >= static_cast<std::size_t>(logits.cols())) {
    throw InvalidArgumentError("softmax_cross_entropy: label " + std::to_string(label) +
                               " out of range for " + std::to_string(logits.cols()) +
                               " classes");
  }
  const double shift = logits.maxCoeff();
  const Eigen::RowVectorXd exps = (logits.row(0).array() - shift).exp();
  const double sum = exps.sum();
  LossResult out;
  out.loss = std::log(sum) - (logits(0, static_cast<Eigen::Index>(label)) - shift);
  out.grad = exps / sum;
  out.grad(0, static_cast<Eigen::Index>(label)) -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp Mlp::create(ParameterStore& params, const std::string& name,
                std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("mlp '" + name + "' needs at least one layer");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) {
      throw ConfigError("mlp '" + name + "' has a zero width");
    }
    const std::string layer = name + ".fc" + std::to_string(i);
    mlp.weights.push_back(params.add_glorot(layer + ".weight", widths[i], widths[i + 1], rng));
    mlp.biases.push_back(params.add_zeros(layer + ".bias", 1, widths[i + 1]));
  }
  return mlp;
}

Var Mlp::forward(Tape& tape, const ParameterStore& params, Var x) const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    x = linear(tape, x, tape.parameter(params, weights[i]));
    x = add_bias(tape, x, tape.parameter(params, biases[i]));
    if (i + 1 < weights.size()) x = relu(tape, x);
  }
  return x;
}

std::size_t Mlp::input_width(const ParameterStore& params) const {
  return static_cast<std::size_t>(params[weights.front()].value.rows());
}

std::size_t Mlp::output_width(const ParameterStore& params) const {
  return static_cast<std::size_t>(params[weights.back()].value.cols());
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam|sgd)");
}

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

Optimizer::Optimizer(OptimizerConfig config) { state_.config = config; }

void Optimizer::set_learning_rate(double learning_rate) {
  if (!(learning_rate >= 0.0)) throw InvalidArgumentError("learning rate must be >= 0");
  state_.config.learning_rate = learning_rate;
}

void Optimizer::step(ParameterStore& params) {
  for (const auto& p : params.all()) {
    if (!p.grad.allFinite()) {
      throw TrainingDivergenceError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const auto& cfg = state_.config;
  ++state_.step;
  if (cfg.kind == OptimizerKind::sgd) {
    for (auto& p : params.all()) p.value -= cfg.learning_rate * p.grad;
    params.zero_grad();
    return;
  }

  if (state_.first_moment.size() != params.size()) {
    state_.first_moment.clear();
    state_.second_moment.clear();
    for (const auto& p : params.all()) {
      state_.first_moment.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      state_.second_moment.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t s = 0; s < params.size(); ++s) {
    Parameter& p = params[s];
    Matrix& m = state_.first_moment[s];
    Matrix& v = state_.second_moment[s];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= cfg.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + cfg.epsilon);
  }
  params.zero_grad();
}

// ---------------------------------------------------------------------------
// Gradient check

GradientCheckReport gradient_check(const LossFunction& loss, ParameterStore& params,
                                   double epsilon) {
  params.zero_grad();
  loss(params, true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params.all()) analytic.push_back(p.grad);
  params.zero_grad();

  GradientCheckReport report;
  for (std::size_t s = 0; s < params.size(); ++s) {
    Parameter& p = params[s];
    GradientCheckEntry entry{p.name, 0.0};
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + epsilon;
      const double up = loss(params, false);
      x = saved - epsilon;
      const double down = loss(params, false);
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[s].data()[i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      entry.max_relative_error = std::max(entry.max_relative_error, err);
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.blocks.push_back(std::move(entry));
  }
  return report;
}

}  // namespace rigcn::nn
