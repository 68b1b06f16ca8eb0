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
#include "tbvi/model.hpp"
#include "tbvi/rng.hpp"
#include "tbvi/tensor.hpp"

#include <memory>
#include <optional>
#include <string>

namespace tbvi {

enum class Family { kVae, kIwae, kMiwae, kCiwae, kPiwae };

std::string to_string(Family family);
Family parse_family(const std::string& name);

struct BoundConfig {
  Family family = Family::kMiwae;
  Index K = 8;  // importance samples per group
  Index M = 8;  // groups averaged outside the log
  Index L = 8;  // inference-side samples per group (PIWAE only)
  double beta = 0.5;
  bool learnable_beta = false;
  double beta_raw = 0.0;  // beta = logistic(beta_raw) when learnable

  // Budget T = 64 per data item for every family.
  static BoundConfig defaults(Family family);

  void validate() const;
  // The combination weight in force: logistic(beta_raw) when learnable.
  [[nodiscard]] double effective_beta() const;
  [[nodiscard]] Index budget() const { return M * K; }
  bool operator==(const BoundConfig&) const = default;
};

std::string describe(const BoundConfig& config);

// ---------------------------------------------------------------------------
// Scalar estimators over one data item's M x K matrix of log weights.
// ---------------------------------------------------------------------------

// Mean of all entries: every weight is treated as a separate ELBO sample.
template <typename Derived>
typename Derived::Scalar elbo_vae(const Eigen::MatrixBase<Derived>& log_w) {
  return log_w.mean();
}

template <typename Derived>
typename Derived::Scalar elbo_iwae(const Eigen::MatrixBase<Derived>& log_w) {
  if (log_w.rows() != 1) throw ConfigError("elbo_iwae requires M = 1; use elbo_miwae");
  return log_mean_exp_rows(log_w)[0];
}

template <typename Derived>
typename Derived::Scalar elbo_miwae(const Eigen::MatrixBase<Derived>& log_w) {
  return log_mean_exp_rows(log_w).mean();
}

template <typename Derived>
typename Derived::Scalar elbo_ciwae(const Eigen::MatrixBase<Derived>& log_w,
                                    typename Derived::Scalar beta) {
  if (!(beta >= 0 && beta <= 1)) throw ConfigError("CIWAE beta must lie in [0, 1]");
  return beta * elbo_vae(log_w) + (1 - beta) * elbo_miwae(log_w);
}

// d/d beta_raw of -[beta * vae + (1 - beta) * iwae], beta = logistic(beta_raw):
// (iwae - vae) * beta * (1 - beta).
double grad_beta(double elbo_vae_value, double elbo_iwae_value, double beta_raw);
// Same, with iwae - vae taken from bound_gap(log_w).
double grad_beta(const Matrix& log_w, double beta_raw);

// Row mean of IWAE minus VAE over the rows of `log_w`, from each row's
// offsets to its first weight. Exactly 0 for rows of equal weights.
double bound_gap(const Matrix& log_w);

// ---------------------------------------------------------------------------
// Differentiable estimators over a batch.
// ---------------------------------------------------------------------------

// Log weights of a batch on a live tape: row b*M + m holds the K weights of
// group m for item b.
struct LogWeightMatrix {
  std::shared_ptr<Tape> tape;
  Tensor values;  // (batch * M) x K
  BoundGroup phi;
  BoundGroup theta;
  Index batch = 0;
  Index M = 0;
  Index K = 0;

  [[nodiscard]] const Matrix& value() const { return values.value(); }
  // Rows of one data item.
  [[nodiscard]] Matrix item(Index b) const { return value().middleRows(b * M, M); }
};

// Standard-normal noise, rows x dim, read sequentially from the stream.
Matrix draw_noise(const CounterRng& rng, Index rows, Index dim);

// One encoder pass per item, M*K reparameterized samples per item.
LogWeightMatrix sample_log_weights(const ModelParams& params, const Matrix& x, Index M, Index K,
                                   const Matrix& noise);
LogWeightMatrix sample_log_weights(const ModelParams& params, const Matrix& x, Index M, Index K,
                                   const CounterRng& rng);

// Batch means (nats per data item) as tape scalars.
Tensor elbo_vae(const LogWeightMatrix& log_w);
Tensor elbo_iwae(const LogWeightMatrix& log_w);
Tensor elbo_miwae(const LogWeightMatrix& log_w);
Tensor elbo_ciwae(const LogWeightMatrix& log_w, double beta);

struct GradEstimate {
  ParamList grad_phi;
  ParamList grad_theta;
  std::optional<double> grad_beta;
  double objective_value = 0.0;  // ELBO to maximize, nats per item
  double vae_value = 0.0;
  double iwae_value = 0.0;
};

// Gradient of the family objective (maximization sign). Consumes the tape.
GradEstimate gradients(const BoundConfig& config, LogWeightMatrix& log_w);

// phi from MIWAE over M x L, theta from IWAE over 1 x K. The encoder pass is
// shared; the two targets use independent noise.
GradEstimate gradients_piwae(const ModelParams& params, const Matrix& x, Index M, Index L, Index K,
                             const Matrix& noise_phi, const Matrix& noise_theta);
GradEstimate gradients_piwae(const ModelParams& params, const Matrix& x, Index M, Index L, Index K,
                             const CounterRng& rng);

// Routes every family, PIWAE included; used by the trainer.
GradEstimate estimate_gradients(const ModelParams& params, const Matrix& x, const BoundConfig& config,
                                const CounterRng& rng);

}  // namespace tbvi
