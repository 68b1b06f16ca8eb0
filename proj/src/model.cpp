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

#include "tbvi/model.hpp"

#include "tbvi/rng.hpp"

#include <cmath>

namespace tbvi {

namespace {

struct LayerShape {
  std::string name;
  Index fan_in;
  Index fan_out;
};

std::vector<LayerShape> encoder_layers(const ModelConfig& c) {
  std::vector<LayerShape> layers{{"enc.fc1", c.input_dim, c.hidden_dim}};
  for (Index l = 1; l < c.n_hidden_layers; ++l) {
    layers.push_back({"enc.fc" + std::to_string(l + 1), c.hidden_dim, c.hidden_dim});
  }
  layers.push_back({"enc.mu", c.hidden_dim, c.latent_dim});
  layers.push_back({"enc.logvar", c.hidden_dim, c.latent_dim});
  return layers;
}

std::vector<LayerShape> decoder_layers(const ModelConfig& c) {
  std::vector<LayerShape> layers{{"dec.fc1", c.latent_dim, c.hidden_dim}};
  for (Index l = 1; l < c.n_hidden_layers; ++l) {
    layers.push_back({"dec.fc" + std::to_string(l + 1), c.hidden_dim, c.hidden_dim});
  }
  layers.push_back({"dec.out", c.hidden_dim, c.input_dim});
  return layers;
}

ParamList allocate(const std::vector<LayerShape>& layers) {
  ParamList out;
  for (const LayerShape& layer : layers) {
    out.push_back({layer.name + ".weight", Matrix::Zero(layer.fan_in, layer.fan_out)});
    out.push_back({layer.name + ".bias", Matrix::Zero(1, layer.fan_out)});
  }
  return out;
}

void fill_uniform(ParamList& group, CounterRng rng) {
  for (NamedMatrix& p : group) {
    if (!p.name.ends_with(".weight")) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || latent_dim < 1 || n_hidden_layers < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
}

std::string describe(const ModelConfig& c) {
  return std::to_string(c.input_dim) + "-" + std::to_string(c.hidden_dim) + "-" +
         std::to_string(c.latent_dim) + "x" + std::to_string(c.n_hidden_layers);
}

Index ModelParams::scalar_count() const {
  Index n = 0;
  for (const auto& p : phi) n += p.value.size();
  for (const auto& p : theta) n += p.value.size();
  return n;
}

Index param_count(const ModelConfig& c) {
  c.validate();
  const Index d = c.input_dim, h = c.hidden_dim, z = c.latent_dim;
  const Index hidden_stack = (c.n_hidden_layers - 1) * (h * h + h);
  const Index encoder = (d * h + h) + hidden_stack + 2 * (h * z + z);
  const Index decoder = (z * h + h) + hidden_stack + (h * d + d);
  return encoder + decoder;
}

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  return {config, allocate(encoder_layers(config)), allocate(decoder_layers(config))};
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params = zero_params(config);
  const CounterRng rng(seed, StreamTag::kInit, {});
  fill_uniform(params.phi, rng.substream(0));
  fill_uniform(params.theta, rng.substream(1));
  return params;
}

BoundGroup bind_params(Tape& tape, const ParamList& group, bool requires_grad) {
  BoundGroup out;
  for (const NamedMatrix& p : group) {
    out.names.push_back(p.name);
    out.tensors.push_back(requires_grad ? tape.parameter(p.value) : tape.constant(p.value));
  }
  return out;
}

ParamList collect_grads(const BoundGroup& bound) {
  ParamList out;
  for (std::size_t i = 0; i < bound.tensors.size(); ++i) {
    const Tensor& t = bound[i];
    const bool reached = t.requires_grad() && t.grad().size() != 0;
    out.push_back({bound.names[i], reached ? t.grad() : Matrix::Zero(t.rows(), t.cols())});
  }
  return out;
}

DiagGaussian encode(const BoundGroup& phi, const Tensor& x) {
  const std::size_t n = phi.tensors.size();
  if (n < 6 || n % 2 != 0) throw DimensionError("encode: malformed encoder parameter list");
  Tensor h = x;
  for (std::size_t i = 0; i + 4 < n; i += 2) h = tanh(affine(h, phi[i], phi[i + 1]));
  return {affine(h, phi[n - 4], phi[n - 3]), affine(h, phi[n - 2], phi[n - 1])};
}

Tensor reparameterize(const DiagGaussian& q, const Tensor& noise) {
  if (noise.rows() != q.mu.rows() || noise.cols() != q.mu.cols()) {
    throw DimensionError("reparameterize: noise shape does not match the posterior moments");
  }
  const Tensor sigma = exp(scale(q.log_var, 0.5));
  return add(q.mu, mul(sigma, noise));
}

Tensor decode(const BoundGroup& theta, const Tensor& z) {
  const std::size_t n = theta.tensors.size();
  if (n < 4 || n % 2 != 0) throw DimensionError("decode: malformed decoder parameter list");
  Tensor h = z;
  for (std::size_t i = 0; i + 2 < n; i += 2) h = tanh(affine(h, theta[i], theta[i + 1]));
  return affine(h, theta[n - 2], theta[n - 1]);
}

LogJointParts log_joint_parts(const Matrix& x, const Tensor& logits, const Tensor& z,
                              const DiagGaussian& q) {
  return {bernoulli_log_prob_rows(logits, x), std_normal_log_prob_rows(z),
          diag_gaussian_log_prob_rows(z, q.mu, q.log_var)};
}

Tensor log_weight(const LogJointParts& parts) {
  return sub(add(parts.log_px_given_z, parts.log_pz), parts.log_qz);
}

}  // namespace tbvi
