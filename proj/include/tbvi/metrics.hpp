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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace tbvi {

struct TractableGaussianModel;

// ---------------------------------------------------------------------------
// Importance-weighted evaluation
// ---------------------------------------------------------------------------

// Log weights for items [item_begin, item_begin + item_count) and samples
// [sample_begin, sample_begin + sample_count). Sample s of item i always
// uses the same noise, so chunked and monolithic evaluation agree.
Matrix item_log_weights(const ModelParams& params, const Matrix& data, Index item_begin, Index item_count,
                        Index sample_begin, Index sample_count, std::uint64_t seed);

// Per-item log((1/K) sum_k w_k), combining chunks of `chunk` samples by an
// exact streaming log-sum-exp. `source(item_begin, item_count, sample_begin,
// sample_count)` returns an item_count x sample_count block.
template <typename Source>
Vector streaming_log_mean_exp(Source&& source, Index n_items, Index K, Index chunk, Index item_block = 16) {
  if (K < 1) throw ConfigError("K_eval must be >= 1");
  if (chunk < 1) throw ConfigError("chunk must be >= 1");
  Vector out(n_items);
  for (Index begin = 0; begin < n_items; begin += item_block) {
    const Index count = std::min(item_block, n_items - begin);
    Vector running_max = Vector::Constant(count, -std::numeric_limits<double>::infinity());
    Vector running_sum = Vector::Zero(count);
    for (Index s = 0; s < K; s += chunk) {
      const Matrix block = source(begin, count, s, std::min(chunk, K - s));
      for (Index i = 0; i < count; ++i) {
        const double block_max = block.row(i).maxCoeff();
        const double new_max = std::max(running_max[i], block_max);
        running_sum[i] = running_sum[i] * std::exp(running_max[i] - new_max) +
                         (block.row(i).array() - new_max).exp().sum();
        running_max[i] = new_max;
      }
    }
    for (Index i = 0; i < count; ++i) {
      out[begin + i] = running_max[i] + std::log(running_sum[i]) - std::log(static_cast<double>(K));
    }
  }
  return out;
}

struct BoundEstimate {
  double mean = 0.0;       // nats per item
  double std_error = 0.0;  // across items
  Vector per_item;
};

BoundEstimate iwae_bound_eval(const ModelParams& params, const Matrix& data, Index K_eval, std::uint64_t seed,
                              Index chunk = 500);
BoundEstimate iwae_bound_eval(const TractableGaussianModel& model, Index K_eval, std::uint64_t seed,
                              Index chunk = 500);

inline constexpr Index kLogMarginalSamples = 5000;
inline constexpr Index kLogMarginalChunks = 10;

// IWAE bound with K = 5000 in 10 chunks of 500.
BoundEstimate log_marginal_estimate(const ModelParams& params, const Matrix& data, std::uint64_t seed,
                                    Index K = kLogMarginalSamples, Index chunks = kLogMarginalChunks);
BoundEstimate log_marginal_estimate(const TractableGaussianModel& model, std::uint64_t seed,
                                    Index K = kLogMarginalSamples, Index chunks = kLogMarginalChunks);

inline double kl_gap(double iwae64, double logpx) { return iwae64 - logpx; }

// ---------------------------------------------------------------------------
// SSIM: 11x11 Gaussian window (sigma 1.5), C1 = (0.01 L)^2, C2 = (0.03 L)^2,
// L = 1, half-sample symmetric boundary (d c b a | a b c d).
// ---------------------------------------------------------------------------

inline constexpr int kSsimRadius = 5;

template <typename Scalar>
std::array<Scalar, 2 * kSsimRadius + 1> ssim_window() {
  std::array<Scalar, 2 * kSsimRadius + 1> w{};
  Scalar total = 0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    w[i + kSsimRadius] = std::exp(-Scalar(i * i) / (Scalar(2) * Scalar(1.5) * Scalar(1.5)));
    total += w[i + kSsimRadius];
  }
  for (auto& v : w) v /= total;
  return w;
}

inline Index reflect_index(Index i, Index n) {
  for (;;) {
    if (i < 0) {
      i = -i - 1;
    } else if (i >= n) {
      i = 2 * n - i - 1;
    } else {
      return i;
    }
  }
}

// Separable Gaussian filter with symmetric boundaries.
template <typename Scalar>
MatrixT<Scalar> gaussian_filter(const MatrixT<Scalar>& in) {
  const auto w = ssim_window<Scalar>();
  const Index rows = in.rows(), cols = in.cols();
  MatrixT<Scalar> tmp(rows, cols), out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      Scalar acc = 0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) acc += w[k + kSsimRadius] * in(r, reflect_index(c + k, cols));
      tmp(r, c) = acc;
    }
  }
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      Scalar acc = 0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) acc += w[k + kSsimRadius] * tmp(reflect_index(r + k, rows), c);
      out(r, c) = acc;
    }
  }
  return out;
}

template <typename Scalar>
Scalar ssim(const MatrixT<Scalar>& a, const MatrixT<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("ssim: image shapes differ");
  const Scalar c1 = Scalar(0.01) * Scalar(0.01);
  const Scalar c2 = Scalar(0.03) * Scalar(0.03);
  const MatrixT<Scalar> mu_a = gaussian_filter<Scalar>(a);
  const MatrixT<Scalar> mu_b = gaussian_filter<Scalar>(b);
  const MatrixT<Scalar> e_aa = gaussian_filter<Scalar>(a.cwiseProduct(a));
  const MatrixT<Scalar> e_bb = gaussian_filter<Scalar>(b.cwiseProduct(b));
  const MatrixT<Scalar> e_ab = gaussian_filter<Scalar>(a.cwiseProduct(b));
  Scalar total = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar ma = mu_a.data()[i], mb = mu_b.data()[i];
    const Scalar var_a = e_aa.data()[i] - ma * ma;
    const Scalar var_b = e_bb.data()[i] - mb * mb;
    const Scalar cov = e_ab.data()[i] - ma * mb;
    total += ((Scalar(2) * ma * mb + c1) * (Scalar(2) * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<Scalar>(a.size());
}

// ---------------------------------------------------------------------------
// Reconstructions and metric rows
// ---------------------------------------------------------------------------

struct ReconstructionResult {
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  Vector per_item;
  Matrix inputs;           // first grid items, one image per row
  Matrix reconstructions;  // matching Bernoulli means
};

// Decodes the posterior mean of each item and scores it against the input.
ReconstructionResult reconstruction_eval(const ModelParams& params, const Matrix& data, Index side = 28,
                                         Index grid_items = 8);

// 8-bit binary PGM: row of inputs above row of reconstructions.
void write_pgm_grid(const std::filesystem::path& path, const Matrix& inputs, const Matrix& reconstructions,
                    Index side = 28);

struct EvalOptions {
  Index K_iwae = 64;
  Index K_logpx = kLogMarginalSamples;
  Index logpx_chunks = kLogMarginalChunks;
  std::uint64_t seed = 2024;
  Index max_items = 0;  // 0 evaluates every item
  bool with_logpx = true;
  bool with_ssim = true;
};

struct MetricRow {
  std::string model_id;
  std::string dataset_trained;
  std::string dataset_evaluated;
  double iwae64 = 0.0;
  double logpx = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  Index n_items = 0;

  [[nodiscard]] double minus_kl() const { return kl_gap(iwae64, logpx); }
};

MetricRow evaluate_model(const ModelParams& params, const Matrix& data, const std::string& model_id,
                         const std::string& dataset_trained, const std::string& dataset_evaluated,
                         const EvalOptions& options, ReconstructionResult* reconstruction = nullptr);

// Evaluates a model on a dataset other than the one it was trained on.
MetricRow cross_dataset_eval(const ModelParams& params, const std::string& model_id,
                             const std::string& dataset_trained, const Matrix& other_data,
                             const std::string& other_name, const EvalOptions& options,
                             ReconstructionResult* reconstruction = nullptr);

std::vector<std::string> metric_csv_header();
std::vector<std::string> metric_csv_fields(const MetricRow& row);

}  // namespace tbvi
