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

#pragma once

#include "tbvi/common.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace tbvi {

class Tape;

// Handle to a value recorded on a Tape. Values are 2-D row-major; a scalar
// is 1x1 and a bias vector is 1xN.
class Tensor {
 public:
  Tensor() = default;

  [[nodiscard]] const Matrix& value() const;
  // Gradient accumulator; zero-sized until backward reaches this node.
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] Index rows() const { return value().rows(); }
  [[nodiscard]] Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const;
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records primitive operations in execution order. backward() replays them in
// reverse and may be called once; the tape is spent afterwards.
class Tape {
 public:
  // Backward rule: receives the output gradient and accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor parameter(Matrix value);

  // Records an op output. Throws NumericError if `value` is not finite.
  Tensor record(Matrix value, std::span<const Tensor> inputs, BackwardFn backward,
                const char* op_name);

  void backward(const Tensor& loss);

  [[nodiscard]] bool consumed() const { return consumed_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  [[nodiscard]] const Matrix& value(const Tensor& t) const { return node(t).value; }
  [[nodiscard]] const Matrix& grad(const Tensor& t) const { return node(t).grad; }
  [[nodiscard]] bool requires_grad(const Tensor& t) const { return node(t).requires_grad; }

  // Adds `g` into the accumulator of `t` (no-op for constants).
  void accumulate(const Tensor& t, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Tensor& t, const Expr& g) {
    Node& n = node(t);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(const Tensor& t);
  const Node& node(const Tensor& t) const;
  void check_live() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

enum class Activation { kTanh, kSigmoid };

// output[b,o] = sum_i input[b,i] * weight[i,o] + bias[o]
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor activation(const Tensor& input, Activation kind);
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Copy of the value with no path back to `a`.
Tensor detach(const Tensor& a);
// Each input row repeated `times` times consecutively.
Tensor repeat_rows(const Tensor& a, Index times);
// Row-major reinterpretation of the buffer.
Tensor reshape(const Tensor& a, Index rows, Index cols);

// out[m] = log((1/K) sum_k exp(in[m,k])) with the row max shifted out.
Tensor log_mean_exp_rows(const Tensor& input);

// Per-row sum over pixels of log Bernoulli(x | sigmoid(logit)), written as
// -softplus(-logit) - (1 - x) * logit. `x` is a constant.
Tensor bernoulli_log_prob_rows(const Tensor& logits, const Matrix& x);
// Per-row log N(z; mu, diag(exp(log_var))).
Tensor diag_gaussian_log_prob_rows(const Tensor& z, const Tensor& mu, const Tensor& log_var);
// Per-row log N(z; 0, I).
Tensor std_normal_log_prob_rows(const Tensor& z);

// Plain-value kernels shared with the tape ops.
template <typename Derived>
VectorT<typename Derived::Scalar> log_mean_exp_rows(const Eigen::MatrixBase<Derived>& in) {
  using Scalar = typename Derived::Scalar;
  if (in.cols() == 0) throw DimensionError("log_mean_exp_rows: empty reduction (K = 0)");
  VectorT<Scalar> out(in.rows());
  const Scalar log_k = std::log(static_cast<Scalar>(in.cols()));
  for (Index r = 0; r < in.rows(); ++r) {
    const Scalar row_max = in.row(r).maxCoeff();
    if (row_max == -std::numeric_limits<Scalar>::infinity()) {
      out[r] = row_max;
      continue;
    }
    out[r] = row_max + std::log((in.row(r).array() - row_max).exp().sum()) - log_k;
  }
  return out;
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace tbvi
