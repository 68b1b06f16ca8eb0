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

#include "doctest.h"
#include "tbvi/gradcheck.hpp"
#include "tbvi/rng.hpp"
#include "tbvi/tensor.hpp"

#include <cmath>

using namespace tbvi;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t id, double scale = 1.0) {
  const CounterRng r(11, StreamTag::kData, {id});
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * r.normal_at(static_cast<std::uint64_t>(i));
  return m;
}

double check(const TapeFunction& f, const std::vector<Matrix>& inputs) { return finite_diff_check(f, inputs); }

}  // namespace

TEST_CASE("affine and activations match finite differences") {
  const std::vector<Matrix> in{random_matrix(3, 4, 1), random_matrix(4, 2, 2), random_matrix(1, 2, 3)};
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(affine(t[0], t[1], t[2])); }, in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(tanh(affine(t[0], t[1], t[2]))); }, in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(sigmoid(affine(t[0], t[1], t[2]))); }, in) < 1e-6);
}

TEST_CASE("elementwise ops match finite differences") {
  const std::vector<Matrix> in{random_matrix(3, 3, 4), random_matrix(3, 3, 5)};
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(mul(add(t[0], t[1]), sub(t[0], t[1]))); }, in) <
        1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return mean(exp(scale(t[0], 0.5))); }, in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(mul(repeat_rows(t[0], 3), repeat_rows(t[1], 3))); },
              in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(mul(reshape(t[0], 1, 9), reshape(t[1], 1, 9))); },
              in) < 1e-6);
}

TEST_CASE("log-likelihood kernels match finite differences") {
  const std::vector<Matrix> in{random_matrix(4, 3, 6), random_matrix(4, 3, 7), random_matrix(4, 3, 8, 0.3)};
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(log_mean_exp_rows(t[0])); }, in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(diag_gaussian_log_prob_rows(t[0], t[1], t[2])); },
              in) < 1e-6);
  CHECK(check([](Tape&, std::span<const Tensor> t) { return sum(std_normal_log_prob_rows(t[0])); }, in) < 1e-6);
  Matrix x(4, 3);
  x << 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0;
  CHECK(check([x](Tape&, std::span<const Tensor> t) { return sum(bernoulli_log_prob_rows(t[0], x)); }, in) < 1e-6);
}

TEST_CASE("bernoulli log prob matches the direct formula and stays finite") {
  Tape tape;
  Matrix logits(1, 4);
  logits << -3.0, 0.0, 2.5, 0.7;
  Matrix x(1, 4);
  x << 0, 1, 1, 0;
  const Tensor lp = bernoulli_log_prob_rows(tape.constant(logits), x);
  double direct = 0;
  for (Index j = 0; j < 4; ++j) {
    const double p = 1.0 / (1.0 + std::exp(-logits(0, j)));
    direct += x(0, j) * std::log(p) + (1 - x(0, j)) * std::log(1 - p);
  }
  CHECK(lp.value()(0, 0) == doctest::Approx(direct).epsilon(1e-12));

  Tape extreme;
  Matrix big(1, 2);
  big << 800.0, -800.0;
  Matrix y(1, 2);
  y << 0, 1;
  const Tensor e = bernoulli_log_prob_rows(extreme.constant(big), y);
  CHECK(e.value()(0, 0) == doctest::Approx(-1600.0));
}

TEST_CASE("log_mean_exp is shift-stable and handles degenerate rows") {
  Matrix m(3, 2);
  const double inf = std::numeric_limits<double>::infinity();
  m << 1000.0, 1000.0, -1000.0, -1000.0 - std::log(3.0), -inf, -inf;
  const Vector r = log_mean_exp_rows(m);
  CHECK(r[0] == doctest::Approx(1000.0));
  CHECK(r[1] == doctest::Approx(-1000.0 + std::log((1 + 1.0 / 3) / 2)));
  CHECK(std::isinf(r[2]));
  CHECK(r[2] < 0);
  CHECK_THROWS_AS(log_mean_exp_rows(Matrix(2, 0)), DimensionError);
}

TEST_CASE("tape contract: single backward, scalar loss, finite values") {
  Tape tape;
  const Tensor a = tape.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(a), UsageError);
  const Tensor s = sum(a);
  tape.backward(s);
  CHECK(a.grad() == Matrix::Ones(2, 2));
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(s), UsageError);

  Tape bad;
  Matrix big = Matrix::Constant(1, 1, 800.0);
  CHECK_THROWS_AS(exp(bad.parameter(big)), NumericError);
}

TEST_CASE("detach and constants stop gradients") {
  Tape tape;
  const Tensor a = tape.parameter(Matrix::Constant(1, 3, 2.0));
  const Tensor c = tape.constant(Matrix::Constant(1, 3, 5.0));
  const Tensor loss = sum(add(mul(a, c), mul(detach(a), a)));
  tape.backward(loss);
  CHECK(a.grad() == Matrix::Constant(1, 3, 7.0));
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("gradients accumulate over fan-out") {
  Tape tape;
  const Tensor a = tape.parameter(Matrix::Constant(1, 1, 3.0));
  const Tensor loss = sum(add(mul(a, a), scale(a, 4.0)));
  tape.backward(loss);
  CHECK(a.grad()(0, 0) == doctest::Approx(10.0));
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tape tape;
  const Tensor a = tape.parameter(Matrix::Ones(2, 3));
  const Tensor b = tape.parameter(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(reshape(a, 4, 2), DimensionError);
  CHECK_THROWS_AS(affine(a, a, a), DimensionError);
}
