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

#include "tbvi/snr.hpp"

#include "tbvi/csv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tbvi {

namespace {

struct GroupSamples {
  Matrix phi;
  Matrix theta;
};

// Draws from one item's estimator; phi and theta come from the same draw.
class GaussianEstimator {
 public:
  GaussianEstimator(const TractableGaussianModel& model, const BoundConfig& config, Index item)
      : model_(model), config_(config), x_(model.data.row(item).transpose()), mean_(model.q_mean(x_)) {
    config.validate();
  }

  GaussianGradient draw(const CounterRng& rng) {
    GaussianGradient out;
    const Index d = model_.dim;
    Vector g_mean = Vector::Zero(d);
    Vector g_mu = Vector::Zero(d);
    if (config_.family == Family::kPiwae) {
      double unused = 0.0;
      accumulate(rng, config_.M, config_.L, 0.0, g_mean, g_mu, unused, /*want_mean=*/true, false);
      accumulate(rng.substream(1), 1, config_.K, 0.0, g_mean, g_mu, out.objective, false, true);
    } else {
      const double beta = config_.family == Family::kVae     ? 1.0
                          : config_.family == Family::kCiwae ? config_.effective_beta()
                                                              : 0.0;
      accumulate(rng, config_.M, config_.K, beta, g_mean, g_mu, out.objective, true, true);
    }
    out.phi.resize(d * d + d);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < d; ++j) out.phi[i * d + j] = g_mean[i] * x_[j];
      out.phi[d * d + i] = g_mean[i];
    }
    out.theta = g_mu;
    return out;
  }

 private:
  // Adds the gradient of beta * vae + (1 - beta) * miwae over a groups x
  // per_group block of weights. g_mean collects d/dm of the objective
  // (m = A x + b), g_mu collects d/dmu.
  void accumulate(const CounterRng& rng, Index groups, Index per_group, double beta, Vector& g_mean,
                  Vector& g_mu, double& objective, bool want_mean, bool want_mu) {
    const Index d = model_.dim;
    const Index total = groups * per_group;
    const double s = std::sqrt(model_.q_var);
    eps_.resize(total * d);
    rng.normals_at(0, std::span<double>(eps_.data(), eps_.size()));
    z_.resize(total, d);
    log_w_.resize(total);
    for (Index n = 0; n < total; ++n) {
      double acc = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double e = eps_[static_cast<std::size_t>(n * d + k)];
        const double z = mean_[k] + s * e;
        z_(n, k) = z;
        const double rx = x_[k] - z, rz = z - model_.mu[k];
        acc += -0.5 * (rx * rx + rz * rz) + 0.5 * e * e;
      }
      log_w_[n] = acc;  // constant offset omitted; it cancels in normalization
    }
    const double offset = 0.5 * d * std::log(model_.q_var) - 0.5 * d * kLog2Pi;
    double obj = 0.0;
    for (Index m = 0; m < groups; ++m) {
      const auto row = log_w_.segment(m * per_group, per_group);
      const double row_max = row.maxCoeff();
      const double norm = (row.array() - row_max).exp().sum();
      obj += (1.0 - beta) * (row_max + std::log(norm / static_cast<double>(per_group))) +
             beta * row.mean();
      for (Index k = 0; k < per_group; ++k) {
        const Index n = m * per_group + k;
        const double coef = ((1.0 - beta) * std::exp(log_w_[n] - row_max) / norm +
                             beta / static_cast<double>(per_group)) /
                            static_cast<double>(groups);
        for (Index j = 0; j < d; ++j) {
          const double z = z_(n, j);
          if (want_mean) g_mean[j] += coef * (x_[j] + model_.mu[j] - 2.0 * z);
          if (want_mu) g_mu[j] += coef * (z - model_.mu[j]);
        }
      }
    }
    objective = obj / static_cast<double>(groups) + offset;
  }

  const TractableGaussianModel& model_;
  BoundConfig config_;
  Vector x_;
  Vector mean_;
  std::vector<double> eps_;
  Matrix z_;
  Vector log_w_;
};

CounterRng sample_stream(std::uint64_t seed, Index item, Index sample) {
  return CounterRng(seed, StreamTag::kSnr, {static_cast<std::uint64_t>(item), static_cast<std::uint64_t>(sample)});
}

GroupSamples collect_both(const TractableGaussianModel& model, const BoundConfig& config, Index item,
                          Index n_samples, std::uint64_t seed) {
  GaussianEstimator estimator(model, config, item);
  GroupSamples out{Matrix(n_samples, model.phi_size()), Matrix(n_samples, model.theta_size())};
  for (Index i = 0; i < n_samples; ++i) {
    const GaussianGradient g = estimator.draw(sample_stream(seed, item, i));
    out.phi.row(i) = g.phi.transpose();
    out.theta.row(i) = g.theta.transpose();
  }
  return out;
}

double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}


}  // namespace

TractableGaussianModel TractableGaussianModel::make(Index dim, Index n_items, std::uint64_t seed,
                                                    double perturbation) {
  if (dim < 1 || n_items < 1) throw ConfigError("tractable model needs dim >= 1 and n_items >= 1");
  TractableGaussianModel m;
  m.dim = dim;
  CounterRng rng(seed, StreamTag::kData, {0x6A55});
  Vector mu_true(dim);
  for (Index i = 0; i < dim; ++i) mu_true[i] = rng.normal();
  m.data.resize(n_items, dim);
  const double marginal_sd = std::sqrt(2.0);
  for (Index n = 0; n < n_items; ++n) {
    for (Index i = 0; i < dim; ++i) m.data(n, i) = mu_true[i] + marginal_sd * rng.normal();
  }
  m.mu = m.data.colwise().mean().transpose();
  m.A = 0.5 * Matrix::Identity(dim, dim);
  m.b = 0.5 * m.mu;
  m.mu.array() += perturbation;
  m.A.array() += perturbation;
  m.b.array() += perturbation;
  return m;
}

double TractableGaussianModel::log_marginal(const Vector& x) const {
  return -0.5 * (x - mu).squaredNorm() / 2.0 - 0.5 * dim * (kLog2Pi + std::log(2.0));
}

Vector TractableGaussianModel::q_mean(const Vector& x) const { return A * x + b; }

double TractableGaussianModel::log_weight(const Vector& x, const Vector& z) const {
  const Vector m = q_mean(x);
  const double log_lik = -0.5 * (x - z).squaredNorm() - 0.5 * dim * kLog2Pi;
  const double log_prior = -0.5 * (z - mu).squaredNorm() - 0.5 * dim * kLog2Pi;
  const double log_q = -0.5 * (z - m).squaredNorm() / q_var - 0.5 * dim * (std::log(q_var) + kLog2Pi);
  return log_lik + log_prior - log_q;
}

Matrix TractableGaussianModel::sample_log_weights(const Vector& x, Index M, Index K,
                                                  const CounterRng& rng) const {
  const Vector m = q_mean(x);
  const double s = std::sqrt(q_var);
  Matrix out(M, K);
  std::vector<double> eps(static_cast<std::size_t>(dim));
  for (Index r = 0; r < M; ++r) {
    for (Index k = 0; k < K; ++k) {
      rng.normals_at(static_cast<std::uint64_t>((r * K + k) * dim), eps);
      Vector z = m + s * Eigen::Map<const Vector>(eps.data(), dim);
      out(r, k) = log_weight(x, z);
    }
  }
  return out;
}

std::string to_string(ParamGroupId group) { return group == ParamGroupId::kPhi ? "phi" : "theta"; }

GaussianGradient gaussian_gradient(const TractableGaussianModel& model, const BoundConfig& config,
                                   Index item, const CounterRng& rng) {
  GaussianEstimator estimator(model, config, item);
  return estimator.draw(rng);
}

GaussianGradient vae_true_gradient(const TractableGaussianModel& model, Index item) {
  const Index d = model.dim;
  const Vector x = model.data.row(item).transpose();
  const Vector m = model.q_mean(x);
  const Vector g = x + model.mu - 2.0 * m;
  GaussianGradient out;
  out.phi.resize(d * d + d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) out.phi[i * d + j] = g[i] * x[j];
    out.phi[d * d + i] = g[i];
  }
  out.theta = m - model.mu;
  const double s2 = model.q_var;
  out.objective = -0.5 * ((x - m).squaredNorm() + d * s2) - 0.5 * ((m - model.mu).squaredNorm() + d * s2) +
                  0.5 * d * (1.0 + std::log(s2)) - 0.5 * d * kLog2Pi;
  return out;
}

TrueGradient true_gradient_oracle(const TractableGaussianModel& model, const BoundConfig& config,
                                  ParamGroupId group, Index item, Index n_samples, std::uint64_t seed) {
  TrueGradient out;
  if (config.family == Family::kVae) {
    const GaussianGradient g = vae_true_gradient(model, item);
    out.value = group == ParamGroupId::kPhi ? g.phi : g.theta;
    out.std_error = Vector::Zero(out.value.size());
    return out;
  }
  const Matrix samples = collect_gradient_samples(model, config, group, item, n_samples, seed);
  const SnrRow row = summarize_gradient_samples(samples);
  out.value = row.mean;
  out.std_error = row.stddev / std::sqrt(static_cast<double>(n_samples));
  out.n_samples = n_samples;
  return out;
}

Matrix collect_gradient_samples(const TractableGaussianModel& model, const BoundConfig& config,
                                ParamGroupId group, Index item, Index n_samples, std::uint64_t seed) {
  GroupSamples both = collect_both(model, config, item, n_samples, seed);
  return group == ParamGroupId::kPhi ? std::move(both.phi) : std::move(both.theta);
}

SnrRow summarize_gradient_samples(const Matrix& samples) {
  const Index n = samples.rows();
  if (n < 2) throw ConfigError("SNR needs at least two gradient samples");
  SnrRow row;
  row.n = n;
  row.mean = samples.colwise().mean().transpose();
  row.stddev.resize(samples.cols());
  row.snr.resize(samples.cols());
  std::vector<double> finite;
  for (Index c = 0; c < samples.cols(); ++c) {
    if ((samples.col(c).array() == samples(0, c)).all()) {
      row.mean[c] = samples(0, c);
      row.stddev[c] = 0.0;
    } else {
      const double var = (samples.col(c).array() - row.mean[c]).square().sum() / static_cast<double>(n - 1);
      row.stddev[c] = std::sqrt(var);
    }
    if (row.stddev[c] == 0.0) {
      row.snr[c] = kSnrInfinity;
      ++row.n_degenerate;
    } else {
      row.snr[c] = std::abs(row.mean[c]) / row.stddev[c];
      finite.push_back(row.snr[c]);
    }
  }
  std::sort(finite.begin(), finite.end());
  if (finite.empty()) {
    row.snr_median = kSnrInfinity;
    row.snr_iqr = std::numeric_limits<double>::quiet_NaN();
  } else {
    row.snr_median = quantile(finite, 0.5);
    row.snr_iqr = quantile(finite, 0.75) - quantile(finite, 0.25);
  }
  return row;
}

SnrRow snr_estimate(const BoundConfig& config, const TractableGaussianModel& model, ParamGroupId group,
                    Index n_samples, std::uint64_t seed, Index item) {
  SnrRow row = summarize_gradient_samples(collect_gradient_samples(model, config, group, item, n_samples, seed));
  row.family = config.family;
  row.group = group;
  row.M = config.M;
  row.K = config.K;
  return row;
}

SlopeFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("fit_log_log: x and y differ in length");
  const auto n = static_cast<Index>(x.size());
  if (n < 3) throw ConfigError("slope fit needs at least three points");
  Vector lx(n), ly(n);
  for (Index i = 0; i < n; ++i) {
    lx[i] = std::log(x[static_cast<std::size_t>(i)]);
    ly[i] = std::log(y[static_cast<std::size_t>(i)]);
  }
  const double mx = lx.mean(), my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  const double sxy = ((lx.array() - mx) * (ly.array() - my)).sum();
  SlopeFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = (ly.array() - fit.intercept - fit.slope * lx.array()).square().sum();
  fit.stderr_ = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  return fit;
}

BoundConfig sweep_cell_config(Family family, Index M, Index K, double beta) {
  BoundConfig c;
  c.family = family;
  c.M = M;
  c.K = K;
  c.L = K;
  c.beta = beta;
  switch (family) {
    case Family::kVae:
      // All M*K draws enter as separate ELBO samples.
      c.M = M * K;
      c.K = 1;
      break;
    case Family::kIwae:
      // M > 1 averages M independent IWAE estimates.
      if (M > 1) c.family = Family::kMiwae;
      break;
    default:
      break;
  }
  return c;
}

std::vector<SnrRow> snr_sweep(const TractableGaussianModel& model, const SnrSweepConfig& config) {
  if (config.n_samples < 2) throw ConfigError("snr_sweep: n_samples must be >= 2");
  std::vector<Index> fit_K;
  for (Index k : config.K_grid) {
    if (k >= config.min_K_for_fit) fit_K.push_back(k);
  }
  if (fit_K.size() < 3) throw ConfigError("K grid has fewer than three points usable for the slope fit");
  if (config.M_grid.size() < 3) throw ConfigError("M grid has fewer than three points for the slope fit");

  std::vector<SnrRow> rows;
  for (Family family : config.families) {
    const std::size_t first = rows.size();
    for (Index M : config.M_grid) {
      for (Index K : config.K_grid) {
        const BoundConfig cell = sweep_cell_config(family, M, K, config.beta);
        const GroupSamples samples = collect_both(model, cell, config.item, config.n_samples, config.seed);
        for (ParamGroupId group : {ParamGroupId::kPhi, ParamGroupId::kTheta}) {
          SnrRow row = summarize_gradient_samples(group == ParamGroupId::kPhi ? samples.phi : samples.theta);
          row.family = family;
          row.group = group;
          row.M = M;
          row.K = K;
          rows.push_back(std::move(row));
        }
      }
    }
    auto find = [&](ParamGroupId g, Index M, Index K) -> SnrRow& {
      for (std::size_t i = first; i < rows.size(); ++i) {
        if (rows[i].group == g && rows[i].M == M && rows[i].K == K) return rows[i];
      }
      throw Error("snr_sweep: missing cell");
    };
    for (ParamGroupId g : {ParamGroupId::kPhi, ParamGroupId::kTheta}) {
      for (Index M : config.M_grid) {
        std::vector<double> xs, ys;
        for (Index K : fit_K) {
          xs.push_back(static_cast<double>(K));
          ys.push_back(find(g, M, K).snr_median);
        }
        const SlopeFit fit = fit_log_log(xs, ys);
        for (Index K : config.K_grid) {
          find(g, M, K).slope_K = fit.slope;
          find(g, M, K).slope_K_stderr = fit.stderr_;
        }
      }
      for (Index K : config.K_grid) {
        std::vector<double> xs, ys;
        for (Index M : config.M_grid) {
          xs.push_back(static_cast<double>(M));
          ys.push_back(find(g, M, K).snr_median);
        }
        const SlopeFit fit = fit_log_log(xs, ys);
        for (Index M : config.M_grid) {
          find(g, M, K).slope_M = fit.slope;
          find(g, M, K).slope_M_stderr = fit.stderr_;
        }
      }
    }
  }
  return rows;
}

std::string snr_csv(const std::vector<SnrRow>& rows) {
  std::ostringstream os;
  os << "family,group,M,K,n,snr_median,snr_iqr,slope_K,slope_K_stderr,slope_M,slope_M_stderr\r\n";
  for (const SnrRow& r : rows) {
    os << to_string(r.family) << ',' << to_string(r.group) << ',' << r.M << ',' << r.K << ',' << r.n << ','
       << format_number(r.snr_median) << ',' << format_number(r.snr_iqr) << ',' << format_number(r.slope_K)
       << ',' << format_number(r.slope_K_stderr) << ',' << format_number(r.slope_M) << ','
       << format_number(r.slope_M_stderr) << "\r\n";
  }
  return os.str();
}

}  // namespace tbvi
