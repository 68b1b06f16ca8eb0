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

#include "tbvi/metrics.hpp"

#include "tbvi/bounds.hpp"
#include "tbvi/csv.hpp"
#include "tbvi/rng.hpp"
#include "tbvi/snr.hpp"

#include <algorithm>
#include <fstream>

namespace tbvi {
namespace {

// Keeps each forward pass near 2048 decoder rows.
Index item_block_for(Index chunk) { return std::max<Index>(1, 2048 / std::max<Index>(1, chunk)); }

BoundEstimate summarize(Vector per_item) {
  BoundEstimate out;
  const Index n = per_item.size();
  if (n == 0) throw DimensionError("evaluation over zero items");
  out.mean = per_item.mean();
  if (n > 1) {
    const double var = (per_item.array() - out.mean).square().sum() / static_cast<double>(n - 1);
    out.std_error = std::sqrt(var / static_cast<double>(n));
  }
  out.per_item = std::move(per_item);
  return out;
}

Index chunk_size(Index K, Index chunks) {
  if (chunks < 1) throw ConfigError("chunks must be >= 1");
  return (K + chunks - 1) / chunks;
}

Matrix gaussian_block(const TractableGaussianModel& model, std::uint64_t seed, Index item_begin,
                      Index item_count, Index sample_begin, Index sample_count) {
  Matrix out(item_count, sample_count);
  std::vector<double> eps(static_cast<std::size_t>(model.dim));
  const double s = std::sqrt(model.q_var);
  for (Index i = 0; i < item_count; ++i) {
    const Vector x = model.data.row(item_begin + i).transpose();
    const Vector m = model.q_mean(x);
    const CounterRng rng(seed, StreamTag::kEval, {static_cast<std::uint64_t>(item_begin + i)});
    for (Index k = 0; k < sample_count; ++k) {
      rng.normals_at(static_cast<std::uint64_t>((sample_begin + k) * model.dim), eps);
      const Vector z = m + s * Eigen::Map<const Vector>(eps.data(), model.dim);
      out(i, k) = model.log_weight(x, z);
    }
  }
  return out;
}

}  // namespace

Matrix item_log_weights(const ModelParams& params, const Matrix& data, Index item_begin, Index item_count,
                        Index sample_begin, Index sample_count, std::uint64_t seed) {
  if (data.cols() != params.config.input_dim) {
    throw DimensionError("evaluation data has " + std::to_string(data.cols()) + " pixels, model expects " +
                         std::to_string(params.config.input_dim));
  }
  const Index D = params.config.latent_dim;
  Matrix noise(item_count * sample_count, D);
  for (Index i = 0; i < item_count; ++i) {
    const CounterRng rng(seed, StreamTag::kEval, {static_cast<std::uint64_t>(item_begin + i)});
    for (Index k = 0; k < sample_count; ++k) {
      rng.normals_at(static_cast<std::uint64_t>((sample_begin + k) * D),
                     std::span<double>(noise.row(i * sample_count + k).data(), static_cast<std::size_t>(D)));
    }
  }
  const LogWeightMatrix log_w =
      sample_log_weights(params, data.middleRows(item_begin, item_count), 1, sample_count, noise);
  return log_w.value();
}

BoundEstimate iwae_bound_eval(const ModelParams& params, const Matrix& data, Index K_eval, std::uint64_t seed,
                              Index chunk) {
  const Index step = std::min(chunk, K_eval);
  auto source = [&](Index b, Index n, Index s, Index c) { return item_log_weights(params, data, b, n, s, c, seed); };
  return summarize(streaming_log_mean_exp(source, data.rows(), K_eval, step, item_block_for(step)));
}

BoundEstimate iwae_bound_eval(const TractableGaussianModel& model, Index K_eval, std::uint64_t seed, Index chunk) {
  auto source = [&](Index b, Index n, Index s, Index c) { return gaussian_block(model, seed, b, n, s, c); };
  return summarize(streaming_log_mean_exp(source, model.data.rows(), K_eval, std::min(chunk, K_eval), 64));
}

BoundEstimate log_marginal_estimate(const ModelParams& params, const Matrix& data, std::uint64_t seed, Index K,
                                    Index chunks) {
  return iwae_bound_eval(params, data, K, seed, chunk_size(K, chunks));
}

BoundEstimate log_marginal_estimate(const TractableGaussianModel& model, std::uint64_t seed, Index K,
                                    Index chunks) {
  return iwae_bound_eval(model, K, seed, chunk_size(K, chunks));
}

ReconstructionResult reconstruction_eval(const ModelParams& params, const Matrix& data, Index side,
                                         Index grid_items) {
  if (side * side != params.config.input_dim || data.cols() != params.config.input_dim) {
    throw DimensionError("reconstruction_eval: image side does not match the model input");
  }
  const Index n = data.rows();
  if (n == 0) throw DimensionError("reconstruction_eval over zero items");
  ReconstructionResult out;
  out.per_item.resize(n);
  const Index grid = std::min(grid_items, n);
  out.inputs = data.topRows(grid);
  out.reconstructions.resize(grid, data.cols());
  constexpr Index kBlock = 256;
  for (Index begin = 0; begin < n; begin += kBlock) {
    const Index count = std::min(kBlock, n - begin);
    Tape tape;
    const BoundGroup phi = bind_params(tape, params.phi, false);
    const BoundGroup theta = bind_params(tape, params.theta, false);
    const DiagGaussian q = encode(phi, tape.constant(data.middleRows(begin, count)));
    const Matrix means = sigmoid(decode(theta, q.mu)).value();
    for (Index i = 0; i < count; ++i) {
      const Matrix a = Eigen::Map<const Matrix>(data.row(begin + i).data(), side, side);
      const Matrix b = Eigen::Map<const Matrix>(means.row(i).data(), side, side);
      out.per_item[begin + i] = ssim<double>(a, b);
      if (begin + i < grid) out.reconstructions.row(begin + i) = means.row(i);
    }
  }
  out.ssim_mean = out.per_item.mean();
  out.ssim_std = n > 1 ? std::sqrt((out.per_item.array() - out.ssim_mean).square().sum() / static_cast<double>(n - 1))
                       : 0.0;
  return out;
}

void write_pgm_grid(const std::filesystem::path& path, const Matrix& inputs, const Matrix& reconstructions,
                    Index side) {
  if (inputs.rows() != reconstructions.rows() || inputs.cols() != side * side ||
      reconstructions.cols() != side * side) {
    throw DimensionError("write_pgm_grid: inputs and reconstructions must align");
  }
  const Index n = inputs.rows();
  const Index width = std::max<Index>(1, n) * side;
  const Index height = 2 * side;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width * height), 0);
  for (Index item = 0; item < n; ++item) {
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        const auto to_byte = [](double v) {
          return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        };
        pixels[static_cast<std::size_t>(r * width + item * side + c)] = to_byte(inputs(item, r * side + c));
        pixels[static_cast<std::size_t>((side + r) * width + item * side + c)] =
            to_byte(reconstructions(item, r * side + c));
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

MetricRow evaluate_model(const ModelParams& params, const Matrix& data, const std::string& model_id,
                         const std::string& dataset_trained, const std::string& dataset_evaluated,
                         const EvalOptions& options, ReconstructionResult* reconstruction) {
  const Matrix subset = options.max_items > 0 && options.max_items < data.rows()
                            ? Matrix(data.topRows(options.max_items))
                            : data;
  MetricRow row;
  row.model_id = model_id;
  row.dataset_trained = dataset_trained;
  row.dataset_evaluated = dataset_evaluated;
  row.n_items = subset.rows();
  row.iwae64 = iwae_bound_eval(params, subset, options.K_iwae, options.seed).mean;
  row.logpx = options.with_logpx
                  ? log_marginal_estimate(params, subset, options.seed, options.K_logpx, options.logpx_chunks).mean
                  : std::numeric_limits<double>::quiet_NaN();
  if (options.with_ssim) {
    ReconstructionResult rec = reconstruction_eval(params, subset);
    row.ssim_mean = rec.ssim_mean;
    row.ssim_std = rec.ssim_std;
    if (reconstruction) *reconstruction = std::move(rec);
  } else {
    row.ssim_mean = row.ssim_std = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

MetricRow cross_dataset_eval(const ModelParams& params, const std::string& model_id,
                             const std::string& dataset_trained, const Matrix& other_data,
                             const std::string& other_name, const EvalOptions& options,
                             ReconstructionResult* reconstruction) {
  if (other_data.cols() != params.config.input_dim) {
    throw DimensionError("cross_dataset_eval: " + other_name + " has " + std::to_string(other_data.cols()) +
                         " pixels, checkpoint expects " + std::to_string(params.config.input_dim));
  }
  return evaluate_model(params, other_data, model_id, dataset_trained, other_name, options, reconstruction);
}

std::vector<std::string> metric_csv_header() {
  return {"model_id", "dataset_trained", "dataset_evaluated", "iwae64", "logpx", "minus_kl",
          "ssim_mean", "ssim_std", "n_items"};
}

std::vector<std::string> metric_csv_fields(const MetricRow& row) {
  return {row.model_id,
          row.dataset_trained,
          row.dataset_evaluated,
          format_number(row.iwae64),
          format_number(row.logpx),
          format_number(row.minus_kl()),
          format_number(row.ssim_mean),
          format_number(row.ssim_std),
          std::to_string(row.n_items)};
}

}  // namespace tbvi
