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

#include "tbvi/trainer.hpp"

#include "tbvi/csv.hpp"
#include "tbvi/rng.hpp"

#include <zlib.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tbvi {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

AdamState AdamState::like(const ParamList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back({p.name, Matrix::Zero(p.value.rows(), p.value.cols())});
    s.v.push_back({p.name, Matrix::Zero(p.value.rows(), p.value.cols())});
  }
  return s;
}

void adam_step(AdamState& state, ParamList& params, const ParamList& grads, double lr,
               const std::string& batch_label) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i].value;
    if (g.rows() != params[i].value.rows() || g.cols() != params[i].value.cols() ||
        state.m[i].value.rows() != g.rows() || state.m[i].value.cols() != g.cols()) {
      throw DimensionError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!g.allFinite()) {
      std::string where = batch_label.empty() ? "" : " in " + batch_label;
      throw NumericError("non-finite gradient for " + params[i].name + where);
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i].value;
    Matrix& m = state.m[i].value;
    Matrix& v = state.v[i].value;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    params[i].value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

double lr_schedule(Index epoch) {
  if (epoch < 0) throw ConfigError("lr_schedule: epoch must be >= 0");
  Index start = 0;
  Index length = 1;
  for (Index i = 0; i < kScheduleSegments; ++i) {
    if (epoch < start + length) return 1e-3 * std::pow(10.0, -static_cast<double>(i) / 7.0);
    start += length;
    length *= 3;
  }
  return 1e-3 * std::pow(10.0, -static_cast<double>(kScheduleSegments - 1) / 7.0);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 0 || eval_every < 0 || eval_items < 0 || logpx_items < 0) {
    throw ConfigError("cadences and item counts must be >= 0");
  }
  if (eval_K < 1) throw ConfigError("eval_K must be >= 1");
  model.validate();
  bound.validate();
  if (bound.learnable_beta && !(bound.beta > 0.0 && bound.beta < 1.0)) {
    throw ConfigError("a learnable beta needs an initial value inside (0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Checkpoint encoding
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'B', 'V', 'I'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 8;
constexpr std::size_t kTrailerBytes = 4;

class ByteWriter {
 public:
  template <typename T>
  void pod(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void i64(Index v) { pod<std::int64_t>(static_cast<std::int64_t>(v)); }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Matrix& m) {
    str(name);
    pod<std::uint32_t>(2);
    i64(m.rows());
    i64(m.cols());
    for (Index i = 0; i < m.size(); ++i) pod<double>(m.data()[i]);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  Index i64() { return static_cast<Index>(pod<std::int64_t>()); }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  NamedMatrix tensor() {
    NamedMatrix out;
    out.name = str();
    if (pod<std::uint32_t>() != 2) throw IntegrityError("checkpoint tensor " + out.name + " is not 2-D");
    const Index rows = i64(), cols = i64();
    if (rows < 0 || cols < 0) throw IntegrityError("checkpoint tensor " + out.name + " has a negative shape");
    need(static_cast<std::size_t>(rows * cols) * sizeof(double));
    out.value.resize(rows, cols);
    for (Index i = 0; i < out.value.size(); ++i) out.value.data()[i] = pod<double>();
    return out;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IntegrityError("checkpoint payload is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_list(ByteWriter& w, const std::string& prefix, const ParamList& list) {
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
  for (const auto& p : list) w.tensor(prefix + p.name, p.value);
}

ParamList read_list(ByteReader& r, const std::string& prefix) {
  const auto n = r.pod<std::uint32_t>();
  ParamList out;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedMatrix t = r.tensor();
    if (t.name.rfind(prefix, 0) != 0) throw IntegrityError("unexpected checkpoint tensor " + t.name);
    t.name.erase(0, prefix.size());
    out.push_back(std::move(t));
  }
  return out;
}

void write_adam(ByteWriter& w, const std::string& prefix, const AdamState& s) {
  w.pod<std::int64_t>(s.t);
  w.pod<double>(s.beta1);
  w.pod<double>(s.beta2);
  w.pod<double>(s.eps);
  write_list(w, prefix + ".m/", s.m);
  write_list(w, prefix + ".v/", s.v);
}

AdamState read_adam(ByteReader& r, const std::string& prefix) {
  AdamState s;
  s.t = r.pod<std::int64_t>();
  s.beta1 = r.pod<double>();
  s.beta2 = r.pod<double>();
  s.eps = r.pod<double>();
  s.m = read_list(r, prefix + ".m/");
  s.v = read_list(r, prefix + ".v/");
  return s;
}

bool same_shapes(const ParamList& a, const ParamList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.rows() != b[i].value.rows() || a[i].value.cols() != b[i].value.cols()) {
      return false;
    }
  }
  return true;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return version == o.version && dataset == o.dataset && model == o.model && bound == o.bound &&
         epoch == o.epoch && seed == o.seed && batch_size == o.batch_size && params.config == o.params.config &&
         params.phi == o.params.phi && params.theta == o.params.theta && adam_phi == o.adam_phi &&
         adam_theta == o.adam_theta && adam_beta == o.adam_beta;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  ByteWriter p;
  p.str(c.dataset);
  p.i64(c.model.input_dim);
  p.i64(c.model.hidden_dim);
  p.i64(c.model.latent_dim);
  p.i64(c.model.n_hidden_layers);
  p.pod<std::uint8_t>(static_cast<std::uint8_t>(c.bound.family));
  p.i64(c.bound.K);
  p.i64(c.bound.M);
  p.i64(c.bound.L);
  p.pod<double>(c.bound.beta);
  p.pod<std::uint8_t>(c.bound.learnable_beta ? 1 : 0);
  p.pod<double>(c.bound.beta_raw);
  p.i64(c.epoch);
  p.pod<std::uint64_t>(c.seed);
  p.i64(c.batch_size);
  write_list(p, "phi/", c.params.phi);
  write_list(p, "theta/", c.params.theta);
  write_adam(p, "adam.phi", c.adam_phi);
  write_adam(p, "adam.theta", c.adam_theta);
  p.pod<std::uint8_t>(c.adam_beta ? 1 : 0);
  if (c.adam_beta) write_adam(p, "adam.beta", *c.adam_beta);

  const std::vector<std::uint8_t>& payload = p.bytes();
  ByteWriter out;
  for (char ch : kMagic) out.pod<char>(ch);
  out.pod<std::uint16_t>(c.version);
  out.pod<std::uint64_t>(payload.size());
  out.bytes().insert(out.bytes().end(), payload.begin(), payload.end());
  out.pod<std::uint32_t>(crc_of(payload));
  return std::move(out.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + kTrailerBytes) throw IntegrityError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IntegrityError("not a checkpoint: bad magic bytes");
  ByteReader header(bytes.subspan(4, 10));
  const auto version = header.pod<std::uint16_t>();
  const auto length = header.pod<std::uint64_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() - kHeaderBytes - kTrailerBytes != length) {
    throw IntegrityError("checkpoint is truncated: payload length " + std::to_string(length) + ", file holds " +
                         std::to_string(bytes.size() - kHeaderBytes - kTrailerBytes));
  }
  const auto payload = bytes.subspan(kHeaderBytes, length);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + kHeaderBytes + length, 4);
  if (stored != crc_of(payload)) throw IntegrityError("checkpoint checksum mismatch");

  ByteReader r(payload);
  Checkpoint c;
  c.version = version;
  c.dataset = r.str();
  c.model.input_dim = r.i64();
  c.model.hidden_dim = r.i64();
  c.model.latent_dim = r.i64();
  c.model.n_hidden_layers = r.i64();
  const auto family = r.pod<std::uint8_t>();
  if (family > static_cast<std::uint8_t>(Family::kPiwae)) throw IntegrityError("checkpoint: unknown family");
  c.bound.family = static_cast<Family>(family);
  c.bound.K = r.i64();
  c.bound.M = r.i64();
  c.bound.L = r.i64();
  c.bound.beta = r.pod<double>();
  c.bound.learnable_beta = r.pod<std::uint8_t>() != 0;
  c.bound.beta_raw = r.pod<double>();
  c.epoch = r.i64();
  c.seed = r.pod<std::uint64_t>();
  c.batch_size = r.i64();
  c.params.config = c.model;
  c.params.phi = read_list(r, "phi/");
  c.params.theta = read_list(r, "theta/");
  c.adam_phi = read_adam(r, "adam.phi");
  c.adam_theta = read_adam(r, "adam.theta");
  if (r.pod<std::uint8_t>() != 0) c.adam_beta = read_adam(r, "adam.beta");
  if (!r.done()) throw IntegrityError("checkpoint payload has trailing bytes");

  const ModelParams reference = zero_params(c.model);
  if (!same_shapes(reference.phi, c.params.phi) || !same_shapes(reference.theta, c.params.theta) ||
      !same_shapes(c.params.phi, c.adam_phi.m) || !same_shapes(c.params.theta, c.adam_theta.m)) {
    throw IntegrityError("checkpoint tensors do not match its model config " + describe(c.model));
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(checkpoint);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string() + " (disk full?)");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Metrics log
// ---------------------------------------------------------------------------

std::vector<std::string> epoch_csv_header() {
  return {"epoch", "lr", "train_elbo", "iwae64", "logpx", "minus_kl", "beta", "seconds"};
}

std::vector<std::string> epoch_csv_fields(const EpochRow& row) {
  return {std::to_string(row.epoch),     format_number(row.lr),         format_number(row.train_elbo),
          format_number(row.iwae64),     format_number(row.logpx),      format_number(row.minus_kl()),
          format_number(row.beta),       format_number(row.seconds)};
}

std::string epoch_csv(const std::vector<EpochRow>& rows) {
  std::string out = csv_line(epoch_csv_header());
  for (const auto& row : rows) out += csv_line(epoch_csv_fields(row));
  return out;
}

std::vector<EpochRow> parse_epoch_csv(const std::string& text) {
  const CsvTable table = parse_csv(text);
  const auto number = [](const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw FormatError("bad number '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw FormatError("bad number '" + s + "'");
    }
  };
  const std::size_t c_epoch = table.column("epoch"), c_lr = table.column("lr"),
                    c_elbo = table.column("train_elbo"), c_iwae = table.column("iwae64"),
                    c_logpx = table.column("logpx"), c_beta = table.column("beta"),
                    c_seconds = table.column("seconds");
  std::vector<EpochRow> rows;
  for (const auto& r : table.rows) {
    EpochRow row;
    row.epoch = static_cast<Index>(number(r[c_epoch]));
    row.lr = number(r[c_lr]);
    row.train_elbo = number(r[c_elbo]);
    row.iwae64 = number(r[c_iwae]);
    row.logpx = number(r[c_logpx]);
    row.beta = number(r[c_beta]);
    row.seconds = number(r[c_seconds]);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

ParamList negated(const ParamList& grads) {
  ParamList out = grads;
  for (auto& g : out) g.value = -g.value;
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string checkpoint_name(Index epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%06lld.tbvi", static_cast<long long>(epoch));
  return buf;
}

}  // namespace

Checkpoint initial_state(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.dataset = config.dataset;
  c.model = config.model;
  c.bound = config.bound;
  if (c.bound.learnable_beta) c.bound.beta_raw = std::log(c.bound.beta / (1.0 - c.bound.beta));
  c.epoch = 0;
  c.seed = config.seed;
  c.batch_size = config.batch_size;
  c.params = init_params(config.model, config.seed);
  c.adam_phi = AdamState::like(c.params.phi);
  c.adam_theta = AdamState::like(c.params.theta);
  if (c.bound.learnable_beta) c.adam_beta = AdamState::like({{"beta_raw", Matrix::Zero(1, 1)}});
  return c;
}

void check_resume_compatible(const TrainConfig& config, const Checkpoint& c) {
  if (!(c.model == config.model)) {
    throw ConfigError("checkpoint model " + describe(c.model) + " does not match run model " +
                      describe(config.model));
  }
  BoundConfig a = c.bound, b = config.bound;
  a.beta_raw = b.beta_raw = 0.0;
  if (a.learnable_beta) a.beta = b.beta;
  if (!(a == b)) {
    throw ConfigError("checkpoint bound " + describe(c.bound) + " does not match run bound " + describe(config.bound));
  }
  if (c.dataset != config.dataset || c.seed != config.seed || c.batch_size != config.batch_size) {
    throw ConfigError("checkpoint dataset, seed or batch size differ from the run");
  }
  if (c.epoch > config.epochs) {
    throw ConfigError("checkpoint is at epoch " + std::to_string(c.epoch) + ", past the run's " +
                      std::to_string(config.epochs));
  }
}

TrainResult train(const TrainConfig& config, const ImageSet& train_set, const ImageSet* test,
                  std::optional<Checkpoint> resume, const std::function<void(const EpochRow&)>& on_epoch) {
  config.validate();
  if (train_set.pixel_count() != config.model.input_dim) {
    throw DimensionError("training images have " + std::to_string(train_set.pixel_count()) +
                         " pixels, model expects " + std::to_string(config.model.input_dim));
  }
  if (train_set.count() == 0) throw DimensionError("training set is empty");
  Checkpoint state = resume ? std::move(*resume) : initial_state(config);
  if (resume) check_resume_compatible(config, state);

  const bool write = !config.out_dir.empty();
  if (write) std::filesystem::create_directories(config.out_dir / "checkpoints");
  const std::filesystem::path csv_path = config.out_dir / "metrics.csv";

  TrainResult result;
  if (resume && write && std::filesystem::exists(csv_path)) {
    for (const EpochRow& row : parse_epoch_csv(read_text(csv_path))) {
      if (row.epoch <= state.epoch) result.log.push_back(row);
    }
  }

  Matrix eval_subset, eval_full;
  const bool evaluate = test != nullptr && config.eval_every > 0;
  if (evaluate) {
    eval_full = binarize(*test, Binarization::kStochastic, config.eval_seed, 0);
    eval_subset = eval_full.topRows(std::min(config.eval_items > 0 ? config.eval_items : eval_full.rows(),
                                             eval_full.rows()));
  }

  const auto started = std::chrono::steady_clock::now();
  const BoundConfig& bound = state.bound;
  for (Index e = state.epoch; e < config.epochs; ++e) {
    const double lr = lr_schedule(e);
    const std::vector<BinaryBatch> epoch_batches =
        batches(train_set, config.batch_size, e, config.seed, config.binarization);
    double objective_sum = 0.0;
    Index items = 0;
    for (std::size_t j = 0; j < epoch_batches.size(); ++j) {
      const BinaryBatch& batch = epoch_batches[j];
      const std::string label = "epoch " + std::to_string(e + 1) + " batch " + std::to_string(j);
      const CounterRng rng(config.seed, StreamTag::kNoise,
                           {static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(j)});
      try {
        if (bound.family == Family::kPiwae) {
          // Inference network first; the generative step then sees the new phi.
          const GradEstimate g_phi =
              gradients_piwae(state.params, batch.data, bound.M, bound.L, bound.K, rng);
          adam_step(state.adam_phi, state.params.phi, negated(g_phi.grad_phi), lr, label);
          const GradEstimate g_theta =
              gradients_piwae(state.params, batch.data, bound.M, bound.L, bound.K, rng);
          adam_step(state.adam_theta, state.params.theta, negated(g_theta.grad_theta), lr, label);
          objective_sum += g_phi.objective_value * static_cast<double>(batch.batch_size());
        } else {
          const GradEstimate g = estimate_gradients(state.params, batch.data, bound, rng);
          adam_step(state.adam_phi, state.params.phi, negated(g.grad_phi), lr, label);
          adam_step(state.adam_theta, state.params.theta, negated(g.grad_theta), lr, label);
          if (bound.learnable_beta && g.grad_beta) {
            ParamList raw{{"beta_raw", Matrix::Constant(1, 1, state.bound.beta_raw)}};
            adam_step(*state.adam_beta, raw, {{"beta_raw", Matrix::Constant(1, 1, *g.grad_beta)}}, lr, label);
            state.bound.beta_raw = raw[0].value(0, 0);
          }
          objective_sum += g.objective_value * static_cast<double>(batch.batch_size());
        }
      } catch (const NumericError& err) {
        const std::string what = err.what();
        if (what.find(label) != std::string::npos) throw;
        throw NumericError(what + " (" + label + ")");
      }
      items += batch.batch_size();
    }
    state.epoch = e + 1;

    EpochRow row;
    row.epoch = e + 1;
    row.lr = lr;
    row.train_elbo = objective_sum / static_cast<double>(items);
    if (bound.family == Family::kCiwae) row.beta = bound.effective_beta();
    const bool last = e + 1 == config.epochs;
    if (evaluate && ((e + 1) % config.eval_every == 0 || last)) {
      const Matrix& data = last ? eval_full : eval_subset;
      row.iwae64 = iwae_bound_eval(state.params, data, config.eval_K, config.eval_seed).mean;
      if (config.logpx_items > 0) {
        row.logpx = log_marginal_estimate(state.params, data.topRows(std::min(config.logpx_items, data.rows())),
                                          config.eval_seed)
                        .mean;
      }
    }
    row.seconds = config.record_wall_time
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()
                      : 0.0;
    result.log.push_back(row);

    if (write) {
      write_text(csv_path, epoch_csv(result.log));
      if (config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0) {
        save_checkpoint(state, config.out_dir / "checkpoints" / checkpoint_name(e + 1));
      }
    }
    if (on_epoch) on_epoch(row);
  }
  if (write) save_checkpoint(state, config.out_dir / "final.tbvi");
  result.final_state = std::move(state);
  return result;
}

MetricRow cross_dataset_eval(const Checkpoint& checkpoint, const ImageSet& other, const EvalOptions& options,
                             ReconstructionResult* reconstruction) {
  if (other.pixel_count() != checkpoint.model.input_dim) {
    throw DimensionError("cross_dataset_eval: " + other.source_name + " has " + std::to_string(other.pixel_count()) +
                         " pixels, checkpoint expects " + std::to_string(checkpoint.model.input_dim));
  }
  const Matrix data = binarize(other, Binarization::kStochastic, options.seed, 0);
  return cross_dataset_eval(checkpoint.params, describe(checkpoint.bound), checkpoint.dataset, data,
                            other.source_name, options, reconstruction);
}

}  // namespace tbvi
