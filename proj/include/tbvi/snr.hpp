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

#include "tbvi/bounds.hpp"
#include "tbvi/common.hpp"
#include "tbvi/rng.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace tbvi {

// Offset from the optimum at which gradients are measured.
inline constexpr double kSnrPerturbation = 1.0;

// Conjugate Gaussian testbed:
//   p(z) = N(mu, I),  p(x|z) = N(z, I),  q(z|x) = N(A x + b, (2/3) I).
// The marginal p(x) = N(mu, 2I) and the posterior N((x + mu)/2, I/2) are
// closed-form; A* = I/2, b* = mu/2 is the best mean map for any fixed q
// variance. theta = mu, phi = (A, b).
struct TractableGaussianModel {
  Index dim = 0;
  Vector mu;  // generative parameter
  Matrix A;   // inference weights, dim x dim
  Vector b;   // inference bias
  double q_var = 2.0 / 3.0;
  Matrix data;  // n_items x dim

  // Draws data from the model with mean mu_true ~ N(0, I), sets mu to the
  // maximum-likelihood value (the data mean) and (A, b) to their optimum,
  // then adds `perturbation` to every parameter coordinate.
  static TractableGaussianModel make(Index dim, Index n_items, std::uint64_t seed,
                                     double perturbation = kSnrPerturbation);

  [[nodiscard]] Index phi_size() const { return dim * dim + dim; }
  [[nodiscard]] Index theta_size() const { return dim; }

  [[nodiscard]] double log_marginal(const Vector& x) const;
  [[nodiscard]] Vector q_mean(const Vector& x) const;
  [[nodiscard]] double log_weight(const Vector& x, const Vector& z) const;

  // K importance weights per row from the reparameterized sampler.
  [[nodiscard]] Matrix sample_log_weights(const Vector& x, Index M, Index K, const CounterRng& rng) const;
};

enum class ParamGroupId { kPhi, kTheta };
std::string to_string(ParamGroupId group);

// Gradient of the chosen family's estimator for data item `item`, one draw.
// phi is laid out as A (row-major) followed by b. Noise is read from the
// stream from position 0.
struct GaussianGradient {
  Vector phi;
  Vector theta;
  double objective = 0.0;
};
GaussianGradient gaussian_gradient(const TractableGaussianModel& model, const BoundConfig& config,
                                   Index item, const CounterRng& rng);

// Closed-form gradient of the VAE bound at item x.
GaussianGradient vae_true_gradient(const TractableGaussianModel& model, Index item);

struct TrueGradient {
  Vector value;
  Vector std_error;  // zero for the closed form
  Index n_samples = 0;
};
// VAE: closed form. Other families: mean of n_samples independent estimates.
TrueGradient true_gradient_oracle(const TractableGaussianModel& model, const BoundConfig& config,
                                  ParamGroupId group, Index item, Index n_samples, std::uint64_t seed);

// n x coords matrix of independent gradient draws of one group.
Matrix collect_gradient_samples(const TractableGaussianModel& model, const BoundConfig& config,
                                ParamGroupId group, Index item, Index n_samples, std::uint64_t seed);

inline constexpr double kSnrInfinity = std::numeric_limits<double>::infinity();

struct SnrRow {
  Family family = Family::kIwae;
  ParamGroupId group = ParamGroupId::kPhi;
  Index M = 1;
  Index K = 1;
  Index n = 0;
  Vector mean;  // per-coordinate sample mean
  Vector stddev;  // (n - 1) denominator
  Vector snr;     // |mean| / std; kSnrInfinity where std == 0
  Index n_degenerate = 0;  // coordinates with std == 0, excluded below
  double snr_median = 0.0;
  double snr_iqr = 0.0;
  // Filled by the sweep: slope of log SNR against log K (at this M) and
  // against log M (at this K); NaN when not fitted.
  double slope_K = std::numeric_limits<double>::quiet_NaN();
  double slope_K_stderr = std::numeric_limits<double>::quiet_NaN();
  double slope_M = std::numeric_limits<double>::quiet_NaN();
  double slope_M_stderr = std::numeric_limits<double>::quiet_NaN();
};

// Summary statistics of a sample matrix (rows are draws).
SnrRow summarize_gradient_samples(const Matrix& samples);

SnrRow snr_estimate(const BoundConfig& config, const TractableGaussianModel& model, ParamGroupId group,
                    Index n_samples, std::uint64_t seed, Index item = 0);

struct SlopeFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
  Index points = 0;
};
// Least-squares fit of log y on log x (natural logs).
SlopeFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y);

struct SnrSweepConfig {
  std::vector<Family> families{Family::kIwae};
  std::vector<Index> M_grid{1, 2, 4, 8};
  std::vector<Index> K_grid{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  Index n_samples = 10000;
  std::uint64_t seed = 1;
  Index item = 0;
  double beta = 0.5;
  Index min_K_for_fit = 4;
};

// Full factorial over families x {phi, theta} x M_grid x K_grid. Slopes in K
// use K >= min_K_for_fit; slopes in M use the whole M grid. Both need at
// least three points, otherwise ConfigError.
std::vector<SnrRow> snr_sweep(const TractableGaussianModel& model, const SnrSweepConfig& config);

// Estimator configuration the sweep uses for one cell.
BoundConfig sweep_cell_config(Family family, Index M, Index K, double beta);

// family,group,M,K,n,snr_median,snr_iqr,slope_K,slope_K_stderr,slope_M,slope_M_stderr
std::string snr_csv(const std::vector<SnrRow>& rows);

}  // namespace tbvi
