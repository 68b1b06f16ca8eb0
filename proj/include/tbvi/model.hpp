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
#include "tbvi/gradcheck.hpp"
#include "tbvi/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tbvi {

// Single stochastic layer, two tanh hidden layers on each side.
struct ModelConfig {
  Index input_dim = 784;
  Index hidden_dim = 200;
  Index latent_dim = 50;
  Index n_hidden_layers = 2;

  static ModelConfig referential() { return {784, 200, 50, 2}; }
  static ModelConfig larger() { return {784, 400, 20, 2}; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string describe(const ModelConfig& config);

// phi: encoder (inference network), theta: decoder (generative network).
// Tensors are ordered layer by layer, weight before bias; weights are
// stored fan_in x fan_out.
struct ModelParams {
  ModelConfig config;
  ParamList phi;
  ParamList theta;

  [[nodiscard]] Index scalar_count() const;
};

// Closed-form trainable scalar count of phi and theta.
Index param_count(const ModelConfig& config);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zero_params(const ModelConfig& config);

// Parameter leaves of one group bound onto a tape.
struct BoundGroup {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  [[nodiscard]] const Tensor& operator[](std::size_t i) const { return tensors[i]; }
};

BoundGroup bind_params(Tape& tape, const ParamList& group, bool requires_grad);
// Gradient accumulated on each leaf (zeros when the leaf was never reached).
ParamList collect_grads(const BoundGroup& bound);

struct DiagGaussian {
  Tensor mu;       // rows x latent
  Tensor log_var;  // rows x latent
};

DiagGaussian encode(const BoundGroup& phi, const Tensor& x);
// z = mu + exp(log_var / 2) * noise; noise rows must match the (already
// repeated) moments.
Tensor reparameterize(const DiagGaussian& q, const Tensor& noise);
// Bernoulli logits, rows x input_dim.
Tensor decode(const BoundGroup& theta, const Tensor& z);

struct LogJointParts {
  Tensor log_px_given_z;
  Tensor log_pz;
  Tensor log_qz;
};

// Rows of x, z, q must align (one row per sample).
LogJointParts log_joint_parts(const Matrix& x, const Tensor& logits, const Tensor& z,
                              const DiagGaussian& q);
// log w = log p(x|z) + log p(z) - log q(z|x), one row per sample.
Tensor log_weight(const LogJointParts& parts);

}  // namespace tbvi
