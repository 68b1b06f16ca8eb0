/* Copyright 2026 The tbvi Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tbvi/tensor.hpp"

#include <cmath>
#include <string>

namespace tbvi {

namespace {

Tape& tape_of(const Tensor& t) {
  if (!t.valid()) throw UsageError("tensor is not attached to a tape");
  return *t.tape();
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  Tape& ta = tape_of(a);
  if (&ta != &tape_of(b)) throw UsageError("tensors belong to different tapes");
  return ta;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

}  // namespace

const Matrix& Tensor::value() const { return tape_of(*this).value(*this); }
const Matrix& Tensor::grad() const { return tape_of(*this).grad(*this); }
bool Tensor::requires_grad() const { return tape_of(*this).requires_grad(*this); }

double Tensor::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("tensor is not a scalar");
  return v(0, 0);
}

Tape::Node& Tape::node(const Tensor& t) {
  if (t.tape() != this || t.id() >= nodes_.size()) throw UsageError("tensor not on this tape");
  return nodes_[t.id()];
}

const Tape::Node& Tape::node(const Tensor& t) const {
  if (t.tape() != this || t.id() >= nodes_.size()) throw UsageError("tensor not on this tape");
  return nodes_[t.id()];
}

void Tape::check_live() const {
  if (consumed_) throw UsageError("tape already consumed by a backward pass");
}

Tensor Tape::constant(Matrix value) {
  check_live();
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(Matrix value) {
  check_live();
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::span<const Tensor> inputs, BackwardFn backward,
                    const char* op_name) {
  check_live();
  if (!value.allFinite()) throw NumericError(std::string(op_name) + ": non-finite output");
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Tensor(this, nodes_.size() - 1);
}

void Tape::accumulate(const Tensor& t, const Matrix& g) { accumulate_expr(t, g); }

void Tape::backward(const Tensor& loss) {
  check_live();
  Node& root = node(loss);
  if (root.value.size() != 1) throw UsageError("backward: loss must be a scalar");
  consumed_ = true;
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  Tape& tape = common_tape(input, weight);
  common_tape(input, bias);
  const Matrix& x = input.value();
  const Matrix& w = weight.value();
  const Matrix& b = bias.value();
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("affine: shapes do not conform (input " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + ", weight " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ", bias " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
  Matrix out = x * w;
  out.rowwise() += b.row(0);
  const Tensor inputs[] = {input, weight, bias};
  return tape.record(
      std::move(out), inputs,
      [input, weight, bias](Tape& t, const Matrix& g) {
        if (t.requires_grad(input)) t.accumulate_expr(input, g * t.value(weight).transpose());
        if (t.requires_grad(weight)) t.accumulate_expr(weight, t.value(input).transpose() * g);
        if (t.requires_grad(bias)) t.accumulate_expr(bias, g.colwise().sum());
      },
      "affine");
}

Tensor activation(const Tensor& input, Activation kind) {
  Tape& tape = tape_of(input);
  Matrix out;
  if (kind == Activation::kTanh) {
    out = input.value().array().tanh().matrix();
  } else {
    out = input.value().unaryExpr([](double v) { return logistic(v); });
  }
  const Tensor inputs[] = {input};
  Tensor result;
  // The backward rule reads the recorded output, so it captures its own id
  // through a shared slot filled after recording.
  auto self = std::make_shared<Tensor>();
  result = tape.record(
      std::move(out), inputs,
      [input, kind, self](Tape& t, const Matrix& g) {
        const auto y = t.value(*self).array();
        if (kind == Activation::kTanh) {
          t.accumulate_expr(input, (g.array() * (1.0 - y.square())).matrix());
        } else {
          t.accumulate_expr(input, (g.array() * y * (1.0 - y)).matrix());
        }
      },
      kind == Activation::kTanh ? "tanh" : "sigmoid");
  *self = result;
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "add");
  const Tensor inputs[] = {a, b};
  return tape.record(
      a.value() + b.value(), inputs,
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "sub");
  const Tensor inputs[] = {a, b};
  return tape.record(
      a.value() - b.value(), inputs,
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate_expr(b, -g);
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a, b, "mul");
  const Tensor inputs[] = {a, b};
  return tape.record(
      a.value().cwiseProduct(b.value()), inputs,
      [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate_expr(a, g.cwiseProduct(t.value(b)));
        if (t.requires_grad(b)) t.accumulate_expr(b, g.cwiseProduct(t.value(a)));
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  Tape& tape = tape_of(a);
  const Tensor inputs[] = {a};
  return tape.record(
      a.value() * factor, inputs,
      [a, factor](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * factor); }, "scale");
}

Tensor exp(const Tensor& a) {
  Tape& tape = tape_of(a);
  const Tensor inputs[] = {a};
  auto self = std::make_shared<Tensor>();
  Tensor result = tape.record(
      a.value().array().exp().matrix(), inputs,
      [a, self](Tape& t, const Matrix& g) { t.accumulate_expr(a, g.cwiseProduct(t.value(*self))); },
      "exp");
  *self = result;
  return result;
}

Tensor sum(const Tensor& a) {
  Tape& tape = tape_of(a);
  const Tensor inputs[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return tape.record(
      std::move(out), inputs,
      [a, r, c](Tape& t, const Matrix& g) { t.accumulate_expr(a, Matrix::Constant(r, c, g(0, 0))); },
      "sum");
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor detach(const Tensor& a) { return tape_of(a).constant(a.value()); }

Tensor repeat_rows(const Tensor& a, Index times) {
  if (times < 1) throw DimensionError("repeat_rows: times must be >= 1");
  Tape& tape = tape_of(a);
  const Matrix& v = a.value();
  Matrix out(v.rows() * times, v.cols());
  for (Index r = 0; r < v.rows(); ++r) out.middleRows(r * times, times).rowwise() = v.row(r);
  const Tensor inputs[] = {a};
  return tape.record(
      std::move(out), inputs,
      [a, times](Tape& t, const Matrix& g) {
        const Index rows = g.rows() / times;
        Matrix ga(rows, g.cols());
        for (Index r = 0; r < rows; ++r) ga.row(r) = g.middleRows(r * times, times).colwise().sum();
        t.accumulate(a, ga);
      },
      "repeat_rows");
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  Tape& tape = tape_of(a);
  const Matrix& v = a.value();
  if (rows * cols != v.size()) throw DimensionError("reshape: element count changes");
  const Index r0 = v.rows(), c0 = v.cols();
  Matrix out = Eigen::Map<const Matrix>(v.data(), rows, cols);
  const Tensor inputs[] = {a};
  return tape.record(
      std::move(out), inputs,
      [a, r0, c0](Tape& t, const Matrix& g) {
        t.accumulate_expr(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
      },
      "reshape");
}

Tensor log_mean_exp_rows(const Tensor& input) {
  Tape& tape = tape_of(input);
  const Matrix& v = input.value();
  Matrix out = log_mean_exp_rows(v);
  const Tensor inputs[] = {input};
  auto self = std::make_shared<Tensor>();
  Tensor result = tape.record(
      std::move(out), inputs,
      [input, self](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(input);
        const Matrix& y = t.value(*self);
        // d out[m] / d in[m,k] = exp(in[m,k]) / sum_j exp(in[m,j]). Weights
        // under 2^-200 are dropped: they only seed subnormals downstream.
        constexpr double kLogNegligible = -200.0 * 0.6931471805599453;
        const double log_k = std::log(static_cast<double>(x.cols()));
        Matrix gx(x.rows(), x.cols());
        for (Index r = 0; r < x.rows(); ++r) {
          gx.row(r) = (x.row(r).array() - y(r, 0) - log_k)
                          .unaryExpr([](double a) { return a < kLogNegligible ? 0.0 : std::exp(a); }) *
                      g(r, 0);
        }
        t.accumulate(input, gx);
      },
      "log_mean_exp_rows");
  *self = result;
  return result;
}

Tensor bernoulli_log_prob_rows(const Tensor& logits, const Matrix& x) {
  Tape& tape = tape_of(logits);
  const Matrix& l = logits.value();
  if (l.rows() != x.rows() || l.cols() != x.cols()) {
    throw DimensionError("bernoulli_log_prob_rows: logits and data differ in shape");
  }
  Matrix out(l.rows(), 1);
  for (Index r = 0; r < l.rows(); ++r) {
    double acc = 0.0;
    for (Index c = 0; c < l.cols(); ++c) {
      acc += -softplus(-l(r, c)) - (1.0 - x(r, c)) * l(r, c);
    }
    out(r, 0) = acc;
  }
  const Tensor inputs[] = {logits};
  return tape.record(
      std::move(out), inputs,
      [logits, x](Tape& t, const Matrix& g) {
        const Matrix& lv = t.value(logits);
        Matrix gl = x - lv.unaryExpr([](double v) { return logistic(v); });
        gl.array().colwise() *= g.col(0).array();
        t.accumulate(logits, gl);
      },
      "bernoulli_log_prob_rows");
}

Tensor diag_gaussian_log_prob_rows(const Tensor& z, const Tensor& mu, const Tensor& log_var) {
  Tape& tape = common_tape(z, mu);
  common_tape(z, log_var);
  require_same_shape(z, mu, "diag_gaussian_log_prob_rows");
  require_same_shape(z, log_var, "diag_gaussian_log_prob_rows");
  const Matrix& zv = z.value();
  const Matrix& mv = mu.value();
  const Matrix& lv = log_var.value();
  const Eigen::ArrayXXd inv_var = (-lv.array()).exp();
  const Eigen::ArrayXXd diff = zv.array() - mv.array();
  Matrix out = (-0.5 * (diff.square() * inv_var + lv.array() + kLog2Pi)).rowwise().sum().matrix();
  const Tensor inputs[] = {z, mu, log_var};
  return tape.record(
      std::move(out), inputs,
      [z, mu, log_var](Tape& t, const Matrix& g) {
        const Eigen::ArrayXXd inv = (-t.value(log_var).array()).exp();
        const Eigen::ArrayXXd d = t.value(z).array() - t.value(mu).array();
        const Eigen::ArrayXXd gz = (-(d * inv)).colwise() * g.col(0).array();
        if (t.requires_grad(z)) t.accumulate_expr(z, gz.matrix());
        if (t.requires_grad(mu)) t.accumulate_expr(mu, (-gz).matrix());
        if (t.requires_grad(log_var)) {
          const Eigen::ArrayXXd gl = (0.5 * (d.square() * inv - 1.0)).colwise() * g.col(0).array();
          t.accumulate_expr(log_var, gl.matrix());
        }
      },
      "diag_gaussian_log_prob_rows");
}

Tensor std_normal_log_prob_rows(const Tensor& z) {
  Tape& tape = tape_of(z);
  const Matrix& zv = z.value();
  Matrix out = (-0.5 * (zv.array().square() + kLog2Pi)).rowwise().sum().matrix();
  const Tensor inputs[] = {z};
  return tape.record(
      std::move(out), inputs,
      [z](Tape& t, const Matrix& g) {
        Matrix gz = -t.value(z);
        gz.array().colwise() *= g.col(0).array();
        t.accumulate(z, gz);
      },
      "std_normal_log_prob_rows");
}

}  // namespace tbvi
