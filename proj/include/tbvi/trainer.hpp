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
#include "tbvi/data.hpp"
#include "tbvi/metrics.hpp"
#include "tbvi/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tbvi {

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct AdamState {
  ParamList m;
  ParamList v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Zero moments shaped like `params`.
  static AdamState like(const ParamList& params);
  bool operator==(const AdamState&) const = default;
};

// One bias-corrected step on the minimization gradient `grads`. A
// non-finite gradient leaves params and state untouched and throws
// NumericError naming `batch_label`.
void adam_step(AdamState& state, ParamList& params, const ParamList& grads, double lr,
               const std::string& batch_label = {});

inline constexpr Index kScheduleSegments = 8;
inline constexpr Index kScheduleEpochs = 3280;  // sum of 3^i, i = 0..7

// Segment i spans 3^i epochs at 1e-3 * 10^(-i/7); later epochs keep the
// final rate.
double lr_schedule(Index epoch);

// ---------------------------------------------------------------------------
// Configuration and checkpoints
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::string dataset = "mnist";
  ModelConfig model = ModelConfig::referential();
  BoundConfig bound = BoundConfig::defaults(Family::kMiwae);
  Index epochs = kScheduleEpochs;
  Index batch_size = 20;
  std::uint64_t seed = 1;
  Index checkpoint_every = 100;  // 0 keeps only the final checkpoint
  std::filesystem::path out_dir;  // empty: nothing is written
  Index eval_every = 10;          // 0 disables periodic evaluation
  Index eval_items = 1000;
  Index eval_K = 64;
  Index logpx_items = 0;  // items for the periodic log p(x) estimate; 0 skips it
  std::uint64_t eval_seed = 2024;
  bool record_wall_time = true;
  Binarization binarization = Binarization::kStochastic;

  static Index default_epochs(const std::string& dataset) { return dataset == "omniglot" ? 1000 : kScheduleEpochs; }
  void validate() const;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::string dataset;
  ModelConfig model;
  BoundConfig bound;  // beta_raw carries the learnable weight
  Index epoch = 0;    // completed epochs; the next epoch to run
  std::uint64_t seed = 0;
  Index batch_size = 0;
  ModelParams params;
  AdamState adam_phi;
  AdamState adam_theta;
  std::optional<AdamState> adam_beta;

  bool operator==(const Checkpoint&) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
// IntegrityError on truncation or checksum mismatch; FormatError on an
// unknown version.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

// Writes through a temporary file; IoError when the write fails.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRow {
  Index epoch = 0;  // 1-based
  double lr = 0.0;
  double train_elbo = 0.0;
  double iwae64 = std::numeric_limits<double>::quiet_NaN();
  double logpx = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;

  [[nodiscard]] double minus_kl() const { return kl_gap(iwae64, logpx); }
};

std::vector<std::string> epoch_csv_header();
std::vector<std::string> epoch_csv_fields(const EpochRow& row);
std::string epoch_csv(const std::vector<EpochRow>& rows);
std::vector<EpochRow> parse_epoch_csv(const std::string& text);

struct TrainResult {
  Checkpoint final_state;
  std::vector<EpochRow> log;
};

// Fresh state at epoch 0.
Checkpoint initial_state(const TrainConfig& config);

// Runs epochs [start.epoch, config.epochs). `test` feeds the periodic
// evaluation and may be null. With an out_dir, writes metrics.csv,
// checkpoints/epoch-NNNNNN.tbvi at the cadence and final.tbvi. A resumed run
// keeps the rows of an existing metrics.csv up to the resume epoch.
TrainResult train(const TrainConfig& config, const ImageSet& train_set, const ImageSet* test,
                  std::optional<Checkpoint> resume = std::nullopt,
                  const std::function<void(const EpochRow&)>& on_epoch = {});

// Checks that a checkpoint can continue `config`: ConfigError otherwise.
void check_resume_compatible(const TrainConfig& config, const Checkpoint& checkpoint);

// MetricRow for a checkpoint evaluated on another dataset.
MetricRow cross_dataset_eval(const Checkpoint& checkpoint, const ImageSet& other, const EvalOptions& options,
                             ReconstructionResult* reconstruction = nullptr);

}  // namespace tbvi
