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

#include "tbvi/bounds.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace tbvi {

namespace {

constexpr std::array<std::pair<Family, const char*>, 5> kFamilyNames = {{
    {Family::kVae, "vae"},
    {Family::kIwae, "iwae"},
    {Family::kMiwae, "miwae"},
    {Family::kCiwae, "ciwae"},
    {Family::kPiwae, "piwae"},
}};

void check_noise(const Matrix& noise, Index rows, Index dim, const char* what) {
  if (noise.rows() != rows || noise.cols() != dim) {
    throw DimensionError(std::string(what) + ": expected noise " + std::to_string(rows) + "x" +
                         std::to_string(dim) + ", got " + std::to_string(noise.rows()) + "x" +
                         std::to_string(noise.cols()));
  }
}

Matrix repeat_data(const Matrix& x, Index times) {
  Matrix out(x.rows() * times, x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.middleRows(r * times, times).rowwise() = x.row(r);
  return out;
}

// (batch * groups * per_group) x 1 log weights for the given posterior.
Tensor log_weights_column(const BoundGroup& theta, const Matrix& x, const DiagGaussian& q,
                          Index samples_per_item, const Matrix& noise) {
  Tape& tape = *q.mu.tape();
  const DiagGaussian repeated{repeat_rows(q.mu, samples_per_item), repeat_rows(q.log_var, samples_per_item)};
  const Tensor z = reparameterize(repeated, tape.constant(noise));
  const Tensor logits = decode(theta, z);
  return log_weight(log_joint_parts(repeat_data(x, samples_per_item), logits, z, repeated));
}

Tensor miwae_objective(const Tensor& column, Index groups, Index per_group) {
  return mean(log_mean_exp_rows(reshape(column, groups, per_group)));
}

}  // namespace

std::string to_string(Family family) {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& [f, n] : kFamilyNames) {
    if (lower == n) return f;
  }
  throw ConfigError("unknown estimator family '" + name + "'");
}

BoundConfig BoundConfig::defaults(Family family) {
  BoundConfig c;
  c.family = family;
  switch (family) {
    case Family::kVae:
      c.M = 64, c.K = 1, c.L = 1;
      break;
    case Family::kIwae:
      c.M = 1, c.K = 64, c.L = 1;
      break;
    case Family::kMiwae:
      c.M = 8, c.K = 8, c.L = 1;
      break;
    case Family::kCiwae:
      c.M = 1, c.K = 64, c.L = 1;
      break;
    case Family::kPiwae:
      c.M = 8, c.K = 8, c.L = 8;
      break;
  }
  return c;
}

void BoundConfig::validate() const {
  if (K < 1 || M < 1 || L < 1) throw ConfigError("K, M and L must all be >= 1");
  if (family == Family::kVae && K != 1) throw ConfigError("vae requires K = 1 (use M for the sample count)");
  if (family == Family::kIwae && M != 1) throw ConfigError("iwae requires M = 1 (use miwae for M > 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (learnable_beta && family != Family::kCiwae) throw ConfigError("learnable beta applies to ciwae only");
}

double BoundConfig::effective_beta() const { return learnable_beta ? logistic(beta_raw) : beta; }

std::string describe(const BoundConfig& c) {
  std::string s = to_string(c.family) + "(M=" + std::to_string(c.M) + ",K=" + std::to_string(c.K);
  if (c.family == Family::kPiwae) s += ",L=" + std::to_string(c.L);
  if (c.family == Family::kCiwae) s += c.learnable_beta ? ",beta=learned" : ",beta=" + std::to_string(c.beta);
  return s + ")";
}

double grad_beta(double elbo_vae_value, double elbo_iwae_value, double beta_raw) {
  const double beta = logistic(beta_raw);
  return (elbo_iwae_value - elbo_vae_value) * beta * (1.0 - beta);
}

double grad_beta(const Matrix& log_w, double beta_raw) {
  const double beta = logistic(beta_raw);
  return bound_gap(log_w) * beta * (1.0 - beta);
}

double bound_gap(const Matrix& log_w) {
  if (log_w.rows() == 0 || log_w.cols() == 0) throw DimensionError("bound_gap: empty weight matrix");
  const Matrix offsets = log_w.colwise() - log_w.col(0);
  return (log_mean_exp_rows(offsets) - offsets.rowwise().mean()).mean();
}

Matrix draw_noise(const CounterRng& rng, Index rows, Index dim) {
  Matrix noise(rows, dim);
  rng.normals_at(rng.position(), std::span<double>(noise.data(), static_cast<std::size_t>(noise.size())));
  return noise;
}

LogWeightMatrix sample_log_weights(const ModelParams& params, const Matrix& x, Index M, Index K,
                                   const Matrix& noise) {
  if (M < 1 || K < 1) throw ConfigError("sample_log_weights: M*K must be >= 1");
  check_noise(noise, x.rows() * M * K, params.config.latent_dim, "sample_log_weights");
  LogWeightMatrix out;
  out.tape = std::make_shared<Tape>();
  Tape& tape = *out.tape;
  out.phi = bind_params(tape, params.phi, true);
  out.theta = bind_params(tape, params.theta, true);
  out.batch = x.rows();
  out.M = M;
  out.K = K;
  const DiagGaussian q = encode(out.phi, tape.constant(x));
  out.values = reshape(log_weights_column(out.theta, x, q, M * K, noise), x.rows() * M, K);
  return out;
}

LogWeightMatrix sample_log_weights(const ModelParams& params, const Matrix& x, Index M, Index K,
                                   const CounterRng& rng) {
  return sample_log_weights(params, x, M, K, draw_noise(rng, x.rows() * M * K, params.config.latent_dim));
}

Tensor elbo_vae(const LogWeightMatrix& log_w) { return mean(log_w.values); }

Tensor elbo_iwae(const LogWeightMatrix& log_w) {
  if (log_w.M != 1) throw ConfigError("elbo_iwae requires M = 1; use elbo_miwae");
  return mean(log_mean_exp_rows(log_w.values));
}

Tensor elbo_miwae(const LogWeightMatrix& log_w) { return mean(log_mean_exp_rows(log_w.values)); }

Tensor elbo_ciwae(const LogWeightMatrix& log_w, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("CIWAE beta must lie in [0, 1]");
  return add(scale(elbo_vae(log_w), beta), scale(elbo_miwae(log_w), 1.0 - beta));
}

GradEstimate gradients(const BoundConfig& config, LogWeightMatrix& log_w) {
  if (!log_w.tape || log_w.tape->consumed()) throw UsageError("gradients: log weights carry no live tape");
  Tensor objective;
  switch (config.family) {
    case Family::kVae:
      objective = elbo_vae(log_w);
      break;
    case Family::kIwae:
      objective = elbo_iwae(log_w);
      break;
    case Family::kMiwae:
      objective = elbo_miwae(log_w);
      break;
    case Family::kCiwae:
      objective = elbo_ciwae(log_w, config.effective_beta());
      break;
    case Family::kPiwae:
      throw ConfigError("piwae needs two weight matrices; use gradients_piwae");
  }
  GradEstimate out;
  out.objective_value = objective.scalar();
  const Matrix& values = log_w.value();
  out.vae_value = values.mean();
  out.iwae_value = log_mean_exp_rows(values).mean();
  log_w.tape->backward(objective);
  out.grad_phi = collect_grads(log_w.phi);
  out.grad_theta = collect_grads(log_w.theta);
  if (config.learnable_beta) out.grad_beta = grad_beta(values, config.beta_raw);
  return out;
}

GradEstimate gradients_piwae(const ModelParams& params, const Matrix& x, Index M, Index L, Index K,
                             const Matrix& noise_phi, const Matrix& noise_theta) {
  if (M * L < 1 || K < 1) throw ConfigError("gradients_piwae: need M*L >= 1 and K >= 1");
  const Index batch = x.rows();
  const Index dim = params.config.latent_dim;
  check_noise(noise_phi, batch * M * L, dim, "gradients_piwae (phi target)");
  check_noise(noise_theta, batch * K, dim, "gradients_piwae (theta target)");

  Tape tape;
  const BoundGroup phi = bind_params(tape, params.phi, true);
  const BoundGroup theta = bind_params(tape, params.theta, true);
  const BoundGroup theta_frozen = bind_params(tape, params.theta, false);
  const DiagGaussian q = encode(phi, tape.constant(x));

  // Inference target: theta enters as constants, so only phi is reached.
  const Tensor phi_objective =
      miwae_objective(log_weights_column(theta_frozen, x, q, M * L, noise_phi), batch * M, L);
  // Generative target: the shared encoder output enters detached.
  const DiagGaussian q_detached{detach(q.mu), detach(q.log_var)};
  const Tensor theta_objective =
      miwae_objective(log_weights_column(theta, x, q_detached, K, noise_theta), batch, K);

  GradEstimate out;
  out.objective_value = theta_objective.scalar();
  out.iwae_value = out.objective_value;
  out.vae_value = phi_objective.scalar();
  tape.backward(add(phi_objective, theta_objective));
  out.grad_phi = collect_grads(phi);
  out.grad_theta = collect_grads(theta);
  return out;
}

GradEstimate gradients_piwae(const ModelParams& params, const Matrix& x, Index M, Index L, Index K,
                             const CounterRng& rng) {
  const Index dim = params.config.latent_dim;
  return gradients_piwae(params, x, M, L, K, draw_noise(rng, x.rows() * M * L, dim),
                         draw_noise(rng.substream(1), x.rows() * K, dim));
}

GradEstimate estimate_gradients(const ModelParams& params, const Matrix& x, const BoundConfig& config,
                                const CounterRng& rng) {
  if (config.family == Family::kPiwae) return gradients_piwae(params, x, config.M, config.L, config.K, rng);
  LogWeightMatrix log_w = sample_log_weights(params, x, config.M, config.K, rng);
  return gradients(config, log_w);
}

}  // namespace tbvi
