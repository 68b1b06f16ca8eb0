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

#include "tbvi/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tbvi {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-12);
}

}  // namespace

double finite_diff_check(const std::function<double(const ParamList&)>& f, const ParamList& params,
                         const ParamList& analytic, double step) {
  if (analytic.size() != params.size()) throw DimensionError("finite_diff_check: gradient list size");
  ParamList probe = params;
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const Matrix& g = analytic[t].value;
    if (g.rows() != params[t].value.rows() || g.cols() != params[t].value.cols()) {
      throw DimensionError("finite_diff_check: gradient shape for " + params[t].name);
    }
    for (Index i = 0; i < g.size(); ++i) {
      double& coord = probe[t].value.data()[i];
      const double original = coord;
      coord = original + step;
      const double up = f(probe);
      coord = original - step;
      const double down = f(probe);
      coord = original;
      worst = std::max(worst, relative_error(g.data()[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

double finite_diff_check(const TapeFunction& build, const std::vector<Matrix>& inputs, double step) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.parameter(m));
    Tensor loss = build(tape, leaves);
    tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      analytic.push_back(leaf.grad().size() ? leaf.grad() : Matrix::Zero(leaf.rows(), leaf.cols()));
    }
  }
  auto evaluate = [&](const std::vector<Matrix>& values) {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const Matrix& m : values) leaves.push_back(tape.constant(m));
    return build(tape, leaves).scalar();
  };
  std::vector<Matrix> probe = inputs;
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (Index i = 0; i < inputs[t].size(); ++i) {
      double& coord = probe[t].data()[i];
      const double original = coord;
      coord = original + step;
      const double up = evaluate(probe);
      coord = original - step;
      const double down = evaluate(probe);
      coord = original;
      worst = std::max(worst, relative_error(analytic[t].data()[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace tbvi
