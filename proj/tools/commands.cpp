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

#include "commands.hpp"

#include "svg.hpp"
#include "tbvi/bounds.hpp"
#include "tbvi/csv.hpp"
#include "tbvi/data.hpp"
#include "tbvi/metrics.hpp"
#include "tbvi/snr.hpp"
#include "tbvi/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace tbvi::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TBVI_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

void prepare_out(const fs::path& out, bool allow_existing) {
  if (out.empty()) throw UsageError("--out is required");
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)) && !allow_existing) {
    throw UsageError(out.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(out);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<Index>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  return s;
}

// Written before any work starts, completed when the command ends.
class Manifest {
 public:
  Manifest(const std::string& command, std::vector<std::string> argv, json config, std::uint64_t seed,
           const fs::path& out)
      : path_(out / "manifest.json") {
    doc_["command"] = command;
    doc_["argv"] = std::move(argv);
    doc_["config_hash"] = content_hash(config.dump());
    doc_["config"] = std::move(config);
    doc_["seed"] = seed;
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
    doc_["status"] = "running";
    doc_["artifacts"] = json::array();
    flush();
  }
  void artifact(const fs::path& p) { doc_["artifacts"].push_back(p.filename().string()); }
  void artifact_relative(const std::string& p) { doc_["artifacts"].push_back(p); }
  void finish(const std::string& status) {
    doc_["finished_at"] = utc_now();
    doc_["status"] = status;
    flush();
  }
  [[nodiscard]] const json& doc() const { return doc_; }

 private:
  void flush() const { write_text(path_, doc_.dump(2) + "\n"); }
  fs::path path_;
  json doc_;
};

// Marks the manifest failed when a command throws.
template <typename Fn>
int with_manifest(Manifest& manifest, Fn&& fn) {
  try {
    fn();
  } catch (...) {
    manifest.finish("failed");
    throw;
  }
  manifest.finish("ok");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string dataset = "mnist";
  std::string data_dir;
  std::string family = "miwae";
  std::optional<Index> M, K, L;
  std::optional<double> beta;
  bool learn_beta = false;
  std::string model = "referential";
  std::optional<Index> epochs;
  Index batch_size = 20;
  std::uint64_t seed = 1;
  Index checkpoint_every = 100;
  Index eval_every = 10;
  Index eval_items = 1000;
  std::uint64_t eval_seed = 2024;
  Index logpx_items = 0;
  Index train_items = 0;
  std::string binarization = "stochastic";
  bool no_wall_time = false;
  std::string resume;
  std::string out;
  bool force = false;
  std::string from_manifest;
};

void add_train_options(CLI::App& app, TrainFlags& f) {
  app.add_option("--dataset", f.dataset, "mnist or omniglot")->check(CLI::IsMember({"mnist", "omniglot"}));
  app.add_option("--data-dir", f.data_dir, "directory of IDX files (default $TBVI_DATA_DIR, then ./data)");
  app.add_option("--family", f.family, "vae, iwae, miwae, ciwae or piwae")
      ->check(CLI::IsMember({"vae", "iwae", "miwae", "ciwae", "piwae"}));
  app.add_option("--M", f.M, "groups averaged outside the log");
  app.add_option("--K", f.K, "importance samples per group");
  app.add_option("--L", f.L, "inference-side samples (piwae)");
  app.add_option("--beta", f.beta, "combination weight (ciwae); the initial value with --learn-beta");
  app.add_flag("--learn-beta", f.learn_beta, "optimize beta alongside the model (ciwae)");
  app.add_option("--model", f.model, "referential or larger")->check(CLI::IsMember({"referential", "larger"}));
  app.add_option("--epochs", f.epochs, "default 3280 (mnist) or 1000 (omniglot)");
  app.add_option("--batch-size", f.batch_size);
  app.add_option("--seed", f.seed);
  app.add_option("--checkpoint-every", f.checkpoint_every, "epochs between checkpoints; 0 keeps only the final one");
  app.add_option("--eval-every", f.eval_every, "epochs between test evaluations; 0 disables them");
  app.add_option("--eval-items", f.eval_items, "test items in periodic evaluations");
  app.add_option("--eval-seed", f.eval_seed);
  app.add_option("--logpx-items", f.logpx_items, "test items for the periodic log p(x) estimate");
  app.add_option("--train-items", f.train_items, "use only the first N training images");
  app.add_option("--binarization", f.binarization)->check(CLI::IsMember({"stochastic", "threshold"}));
  app.add_flag("--no-wall-time", f.no_wall_time, "write 0 in the seconds column");
  app.add_option("--resume", f.resume, "checkpoint to continue from");
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--force", f.force, "allow writing into an existing output directory");
  app.add_option("--from-manifest", f.from_manifest, "re-run the command recorded in a manifest");
}

struct ResolvedTrain {
  TrainConfig config;
  fs::path data_dir;
  Index train_items = 0;
  std::string resume;
  std::vector<std::string> argv;
  json config_json;
};

ResolvedTrain resolve_train(const TrainFlags& f) {
  ResolvedTrain r;
  TrainConfig& c = r.config;
  const Family family = parse_family(f.family);
  if (f.beta && family != Family::kCiwae) throw UsageError("--beta applies only to --family ciwae");
  if (f.learn_beta && family != Family::kCiwae) throw UsageError("--learn-beta applies only to --family ciwae");
  if (f.L && family != Family::kPiwae) throw UsageError("--L applies only to --family piwae");
  c.dataset = f.dataset;
  c.model = f.model == "larger" ? ModelConfig::larger() : ModelConfig::referential();
  c.bound = BoundConfig::defaults(family);
  if (f.M) c.bound.M = *f.M;
  if (f.K) c.bound.K = *f.K;
  if (f.L) c.bound.L = *f.L;
  if (f.beta) c.bound.beta = *f.beta;
  c.bound.learnable_beta = f.learn_beta;
  c.epochs = f.epochs ? *f.epochs : TrainConfig::default_epochs(f.dataset);
  c.batch_size = f.batch_size;
  c.seed = f.seed;
  c.checkpoint_every = f.checkpoint_every;
  c.eval_every = f.eval_every;
  c.eval_items = f.eval_items;
  c.eval_seed = f.eval_seed;
  c.logpx_items = f.logpx_items;
  c.record_wall_time = !f.no_wall_time;
  c.binarization = f.binarization == "threshold" ? Binarization::kThreshold : Binarization::kStochastic;
  c.out_dir = f.out;
  if (f.train_items < 0) throw UsageError("--train-items must be >= 0");
  c.validate();
  r.data_dir = resolve_data_dir(f.data_dir);
  r.train_items = f.train_items;
  r.resume = f.resume;

  json& j = r.config_json;
  j["dataset"] = c.dataset;
  j["data_dir"] = r.data_dir.string();
  j["family"] = f.family;
  j["M"] = c.bound.M;
  j["K"] = c.bound.K;
  j["L"] = c.bound.L;
  j["beta"] = c.bound.beta;
  j["learn_beta"] = c.bound.learnable_beta;
  j["model"] = f.model;
  j["model_dims"] = describe(c.model);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_every"] = c.eval_every;
  j["eval_items"] = c.eval_items;
  j["eval_K"] = c.eval_K;
  j["eval_seed"] = c.eval_seed;
  j["logpx_items"] = c.logpx_items;
  j["train_items"] = r.train_items;
  j["binarization"] = f.binarization;
  j["wall_time"] = c.record_wall_time;
  j["resume"] = r.resume;
  j["lr_schedule"] = "1e-3 * 10^(-i/7) over segments of 3^i epochs";
  j["adam"] = {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};

  auto& a = r.argv;
  a = {"train",         "--dataset",        c.dataset,
       "--data-dir",    r.data_dir.string(), "--family",
       f.family,        "--M",              std::to_string(c.bound.M),
       "--K",           std::to_string(c.bound.K)};
  if (family == Family::kPiwae) a.insert(a.end(), {"--L", std::to_string(c.bound.L)});
  if (family == Family::kCiwae) a.insert(a.end(), {"--beta", format_number(c.bound.beta)});
  if (c.bound.learnable_beta) a.push_back("--learn-beta");
  a.insert(a.end(), {"--model", f.model, "--epochs", std::to_string(c.epochs), "--batch-size",
                     std::to_string(c.batch_size), "--seed", std::to_string(c.seed), "--checkpoint-every",
                     std::to_string(c.checkpoint_every), "--eval-every", std::to_string(c.eval_every),
                     "--eval-items", std::to_string(c.eval_items), "--eval-seed", std::to_string(c.eval_seed),
                     "--logpx-items", std::to_string(c.logpx_items), "--train-items",
                     std::to_string(r.train_items), "--binarization", f.binarization});
  if (!c.record_wall_time) a.push_back("--no-wall-time");
  if (!r.resume.empty()) a.insert(a.end(), {"--resume", r.resume});
  a.insert(a.end(), {"--out", f.out});
  return r;
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  ResolvedTrain r = resolve_train(f);
  prepare_out(r.config.out_dir, f.force || !r.resume.empty());
  Manifest manifest("train", r.argv, r.config_json, r.config.seed, r.config.out_dir);
  return with_manifest(manifest, [&] {
    ImageSet train_set = load_dataset(r.data_dir, r.config.dataset, Split::kTrain);
    if (r.train_items > 0) train_set = train_set.head(r.train_items);
    std::optional<ImageSet> test;
    if (r.config.eval_every > 0) {
      if (fs::exists(idx_path(r.data_dir, r.config.dataset, Split::kTest))) {
        test = load_dataset(r.data_dir, r.config.dataset, Split::kTest);
      } else {
        err << "note: no test split in " << r.data_dir << "; periodic evaluation skipped\n";
      }
    }
    std::optional<Checkpoint> resume;
    if (!r.resume.empty()) resume = load_checkpoint(r.resume);
    const TrainResult result =
        train(r.config, train_set, test ? &*test : nullptr, std::move(resume), [&](const EpochRow& row) {
          out << "epoch " << row.epoch << " lr " << format_number(row.lr) << " train_elbo "
              << format_number(row.train_elbo);
          if (std::isfinite(row.iwae64)) out << " iwae64 " << format_number(row.iwae64);
          if (std::isfinite(row.beta)) out << " beta " << format_number(row.beta);
          out << "\n";
        });
    manifest.artifact_relative("metrics.csv");
    manifest.artifact_relative("final.tbvi");
    for (const auto& entry : fs::directory_iterator(r.config.out_dir / "checkpoints")) {
      manifest.artifact_relative("checkpoints/" + entry.path().filename().string());
    }
    out << "wrote " << (r.config.out_dir / "final.tbvi").string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string dataset;
  std::string cross;
  std::string data_dir;
  std::string split = "test";
  std::uint64_t eval_seed = 2024;
  Index items = 0;
  Index K = 64;
  Index logpx_K = kLogMarginalSamples;
  bool no_logpx = false;
  std::string out;
  bool force = false;
  std::string from_manifest;
};

void add_eval_options(CLI::App& app, EvalFlags& f) {
  app.add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  app.add_option("--dataset", f.dataset, "dataset to evaluate (default: the training dataset)")
      ->check(CLI::IsMember({"mnist", "omniglot"}));
  app.add_option("--cross", f.cross, "evaluate on this other dataset")->check(CLI::IsMember({"mnist", "omniglot"}));
  app.add_option("--data-dir", f.data_dir);
  app.add_option("--split", f.split)->check(CLI::IsMember({"train", "test"}));
  app.add_option("--eval-seed", f.eval_seed);
  app.add_option("--items", f.items, "evaluate only the first N items");
  app.add_option("--K", f.K, "samples of the IWAE evaluation bound");
  app.add_option("--logpx-K", f.logpx_K, "samples of the log p(x) estimate (10 chunks)");
  app.add_flag("--no-logpx", f.no_logpx);
  app.add_option("--out", f.out)->required();
  app.add_flag("--force", f.force);
  app.add_option("--from-manifest", f.from_manifest);
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  if (!fs::exists(f.checkpoint)) throw UsageError("checkpoint not found: " + f.checkpoint);
  const fs::path data_dir = resolve_data_dir(f.data_dir);
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const std::string dataset = !f.cross.empty() ? f.cross : (!f.dataset.empty() ? f.dataset : ckpt.dataset);
  const Split split = f.split == "train" ? Split::kTrain : Split::kTest;
  if (f.items < 0 || f.K < 1 || f.logpx_K < 1) throw UsageError("--items, --K and --logpx-K must be positive");

  json config;
  config["checkpoint"] = f.checkpoint;
  config["checkpoint_model"] = describe(ckpt.bound);
  config["dataset_trained"] = ckpt.dataset;
  config["dataset_evaluated"] = dataset;
  config["data_dir"] = data_dir.string();
  config["split"] = f.split;
  config["eval_seed"] = f.eval_seed;
  config["items"] = f.items;
  config["K"] = f.K;
  config["logpx_K"] = f.logpx_K;
  config["logpx"] = !f.no_logpx;
  std::vector<std::string> argv{"eval",      "--checkpoint", f.checkpoint, "--dataset", dataset,
                                "--data-dir", data_dir.string(), "--split", f.split, "--eval-seed",
                                std::to_string(f.eval_seed), "--items", std::to_string(f.items), "--K",
                                std::to_string(f.K), "--logpx-K", std::to_string(f.logpx_K)};
  if (f.no_logpx) argv.push_back("--no-logpx");
  argv.insert(argv.end(), {"--out", f.out});

  prepare_out(f.out, f.force);
  Manifest manifest("eval", argv, config, f.eval_seed, f.out);
  return with_manifest(manifest, [&] {
    ImageSet images = load_dataset(data_dir, dataset, split);
    if (f.items > 0) images = images.head(f.items);
    EvalOptions options;
    options.K_iwae = f.K;
    options.K_logpx = f.logpx_K;
    options.seed = f.eval_seed;
    options.with_logpx = !f.no_logpx;
    ReconstructionResult rec;
    const MetricRow row = cross_dataset_eval(ckpt, images, options, &rec);
    write_text(fs::path(f.out) / "metrics.csv", csv_line(metric_csv_header()) + csv_line(metric_csv_fields(row)));
    write_pgm_grid(fs::path(f.out) / "reconstructions.pgm", rec.inputs, rec.reconstructions);
    manifest.artifact_relative("metrics.csv");
    manifest.artifact_relative("reconstructions.pgm");
    out << row.model_id << " trained on " << row.dataset_trained << ", evaluated on " << row.dataset_evaluated
        << ": iwae64 " << format_number(row.iwae64) << " logpx " << format_number(row.logpx) << " minus_kl "
        << format_number(row.minus_kl()) << " ssim " << format_number(row.ssim_mean) << " +/- "
        << format_number(row.ssim_std) << "\n";
  });
}

// ---------------------------------------------------------------------------
// snr
// ---------------------------------------------------------------------------

struct SnrFlags {
  std::string families = "iwae";
  std::string M_grid = "1,2,4,8";
  std::string K_grid = "1,2,4,8,16,32,64,128,256,512,1024";
  Index samples = 10000;
  Index dim = 4;
  Index items = 1024;
  std::uint64_t model_seed = 1;
  std::uint64_t seed = 1;
  double beta = 0.5;
  Index min_K_fit = 4;
  double perturbation = kSnrPerturbation;
  std::string out;
  bool force = false;
  std::string from_manifest;
};

void add_snr_options(CLI::App& app, SnrFlags& f) {
  app.add_option("--families", f.families, "comma-separated families");
  app.add_option("--M-grid", f.M_grid);
  app.add_option("--K-grid", f.K_grid);
  app.add_option("--samples", f.samples, "gradient draws per cell");
  app.add_option("--dim", f.dim, "dimension of the Gaussian testbed");
  app.add_option("--items", f.items, "testbed dataset size");
  app.add_option("--model-seed", f.model_seed);
  app.add_option("--seed", f.seed);
  app.add_option("--beta", f.beta, "ciwae weight");
  app.add_option("--min-K-fit", f.min_K_fit, "smallest K used in the K slope");
  app.add_option("--perturbation", f.perturbation, "offset added to every optimal parameter");
  app.add_option("--out", f.out)->required();
  app.add_flag("--force", f.force);
  app.add_option("--from-manifest", f.from_manifest);
}

std::vector<Index> parse_grid(const std::string& text, const char* flag) {
  std::vector<Index> out;
  for (long long v : parse_int_list(text)) {
    if (v < 1) throw UsageError(std::string(flag) + " entries must be >= 1");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

int cmd_snr(const SnrFlags& f, std::ostream& out) {
  SnrSweepConfig sweep;
  sweep.families.clear();
  for (const auto& name : split_list(f.families)) sweep.families.push_back(parse_family(name));
  if (sweep.families.empty()) throw UsageError("--families is empty");
  sweep.M_grid = parse_grid(f.M_grid, "--M-grid");
  sweep.K_grid = parse_grid(f.K_grid, "--K-grid");
  sweep.n_samples = f.samples;
  sweep.seed = f.seed;
  sweep.beta = f.beta;
  sweep.min_K_for_fit = f.min_K_fit;
  const auto fit_points = std::count_if(sweep.K_grid.begin(), sweep.K_grid.end(),
                                        [&](Index k) { return k >= sweep.min_K_for_fit; });
  if (fit_points < 3) throw UsageError("--K-grid needs at least 3 values >= --min-K-fit for a slope fit");
  if (sweep.M_grid.size() < 3) throw UsageError("--M-grid needs at least 3 values for a slope fit");
  if (f.samples < 2 || f.dim < 1 || f.items < 1) throw UsageError("--samples >= 2, --dim >= 1, --items >= 1");

  json config;
  config["families"] = split_list(f.families);
  config["M_grid"] = sweep.M_grid;
  config["K_grid"] = sweep.K_grid;
  config["samples"] = f.samples;
  config["dim"] = f.dim;
  config["items"] = f.items;
  config["model_seed"] = f.model_seed;
  config["seed"] = f.seed;
  config["beta"] = f.beta;
  config["min_K_fit"] = f.min_K_fit;
  config["perturbation"] = f.perturbation;
  const std::vector<std::string> argv{"snr", "--families", f.families, "--M-grid", join(sweep.M_grid), "--K-grid",
                                      join(sweep.K_grid), "--samples", std::to_string(f.samples), "--dim",
                                      std::to_string(f.dim), "--items", std::to_string(f.items), "--model-seed",
                                      std::to_string(f.model_seed), "--seed", std::to_string(f.seed), "--beta",
                                      format_number(f.beta), "--min-K-fit", std::to_string(f.min_K_fit),
                                      "--perturbation", format_number(f.perturbation), "--out", f.out};

  prepare_out(f.out, f.force);
  Manifest manifest("snr", argv, config, f.seed, f.out);
  return with_manifest(manifest, [&] {
    const TractableGaussianModel model = TractableGaussianModel::make(f.dim, f.items, f.model_seed, f.perturbation);
    const std::vector<SnrRow> rows = snr_sweep(model, sweep);
    write_text(fs::path(f.out) / "snr.csv", snr_csv(rows));

    std::vector<Series> series;
    for (const SnrRow& row : rows) {
      const std::string label = to_string(row.family) + " " + to_string(row.group) + " M=" + std::to_string(row.M);
      if (series.empty() || series.back().label != label) series.push_back({label, {}, {}});
      series.back().x.push_back(static_cast<double>(row.K));
      series.back().y.push_back(row.snr_median);
    }
    ChartOptions chart{"Gradient SNR", "K", "median SNR", true, true};
    write_text(fs::path(f.out) / "snr.svg", line_chart_svg(series, chart));
    manifest.artifact_relative("snr.csv");
    manifest.artifact_relative("snr.svg");
    for (const SnrRow& row : rows) {
      if (row.M != sweep.M_grid.front() || row.K != sweep.K_grid.back()) continue;
      out << to_string(row.family) << " " << to_string(row.group) << ": slope_K " << format_number(row.slope_K)
          << " +/- " << format_number(row.slope_K_stderr) << ", slope_M " << format_number(row.slope_M) << " +/- "
          << format_number(row.slope_M_stderr) << "\n";
    }
  });
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotFlags {
  std::vector<std::string> csvs;
  std::size_t window = 10;
  std::string out;
  bool force = false;
};

int cmd_plot(const PlotFlags& f, std::ostream& out) {
  if (f.window < 1) throw UsageError("--window must be >= 1");
  std::vector<std::pair<std::string, std::vector<EpochRow>>> logs;
  for (const auto& path : f.csvs) {
    const fs::path p(path);
    std::string label = p.parent_path().filename().string();
    if (label.empty()) label = p.stem().string();
    logs.emplace_back(label, parse_epoch_csv(read_text(p)));
  }
  json config;
  config["csvs"] = f.csvs;
  config["window"] = f.window;
  std::vector<std::string> argv{"plot"};
  argv.insert(argv.end(), f.csvs.begin(), f.csvs.end());
  argv.insert(argv.end(), {"--window", std::to_string(f.window), "--out", f.out});

  prepare_out(f.out, f.force);
  Manifest manifest("plot", argv, config, 0, f.out);
  return with_manifest(manifest, [&] {
    const std::pair<const char*, double EpochRow::*> metrics[] = {{"iwae64", &EpochRow::iwae64},
                                                                  {"logpx", &EpochRow::logpx}};
    for (const auto& [name, field] : metrics) {
      std::vector<Series> series;
      for (const auto& [label, rows] : logs) {
        Series s{label, {}, {}};
        for (const EpochRow& row : rows) {
          if (!std::isfinite(row.*field)) continue;
          s.x.push_back(static_cast<double>(row.epoch));
          s.y.push_back(row.*field);
        }
        s.y = rolling_mean(s.y, f.window);
        series.push_back(std::move(s));
      }
      const std::string file = std::string(name) + ".svg";
      ChartOptions chart{std::string(name) + " (rolling window " + std::to_string(f.window) + ")", "epoch",
                         std::string(name) + " (nats)"};
      write_text(fs::path(f.out) / file, line_chart_svg(series, chart));
      manifest.artifact_relative(file);
      out << "wrote " << (fs::path(f.out) / file).string() << "\n";
    }
  });
}

// ---------------------------------------------------------------------------
// make-synthetic
// ---------------------------------------------------------------------------

struct SyntheticFlags {
  std::string datasets = "mnist,omniglot";
  Index train_count = 2000;
  Index test_count = 500;
  std::uint64_t seed = 7;
  std::string out;
  bool force = false;
};

int cmd_make_synthetic(const SyntheticFlags& f, std::ostream& out) {
  if (f.train_count < 1 || f.test_count < 1) throw UsageError("image counts must be >= 1");
  const std::vector<std::string> names = split_list(f.datasets);
  json config;
  config["datasets"] = names;
  config["train_count"] = f.train_count;
  config["test_count"] = f.test_count;
  config["seed"] = f.seed;
  const std::vector<std::string> argv{"make-synthetic", "--datasets", f.datasets, "--train-count",
                                      std::to_string(f.train_count), "--test-count", std::to_string(f.test_count),
                                      "--seed", std::to_string(f.seed), "--out", f.out};
  prepare_out(f.out, f.force);
  Manifest manifest("make-synthetic", argv, config, f.seed, f.out);
  return with_manifest(manifest, [&] {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::uint64_t base = f.seed + 1000 * static_cast<std::uint64_t>(i);
      for (const Split split : {Split::kTrain, Split::kTest}) {
        const Index count = split == Split::kTrain ? f.train_count : f.test_count;
        const ImageSet images = synthetic_strokes(count, base + (split == Split::kTest ? 1 : 0), names[i], split);
        const fs::path path = idx_path(f.out, names[i], split);
        write_idx_file(path, images);
        manifest.artifact(path);
        out << "wrote " << path.string() << " (" << count << " images)\n";
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

// `<command> --from-manifest m.json [--out dir] [--force]` becomes the
// manifest's recorded argv with the output directory swapped.
std::optional<std::vector<std::string>> expand_manifest(const std::vector<std::string>& args) {
  std::string manifest_path, out;
  bool force = false;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto value = [&](const std::string& flag) -> std::optional<std::string> {
      if (args[i] == flag) {
        if (i + 1 >= args.size()) throw UsageError(flag + " needs a value");
        return args[++i];
      }
      if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
      return std::nullopt;
    };
    if (auto v = value("--from-manifest")) {
      manifest_path = *v;
    } else if (auto o = value("--out")) {
      out = *o;
    } else if (args[i] == "--force") {
      force = true;
    } else {
      throw UsageError("--from-manifest only combines with --out and --force, got " + args[i]);
    }
  }
  if (manifest_path.empty()) return std::nullopt;
  json doc;
  try {
    doc = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + manifest_path + ": " + e.what());
  }
  if (!doc.contains("argv") || !doc["argv"].is_array() || doc["argv"].empty()) {
    throw FormatError("manifest " + manifest_path + " records no argv");
  }
  std::vector<std::string> argv = doc["argv"].get<std::vector<std::string>>();
  if (argv.front() != args.front()) {
    throw UsageError("manifest records command '" + argv.front() + "', not '" + args.front() + "'");
  }
  if (!out.empty()) {
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == "--out") argv[i + 1] = out;
    }
  }
  if (force) argv.push_back("--force");
  return argv;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && (args.front() == "train" || args.front() == "eval" || args.front() == "snr")) {
    const bool has_manifest = std::any_of(args.begin(), args.end(), [](const std::string& a) {
      return a == "--from-manifest" || a.rfind("--from-manifest=", 0) == 0;
    });
    if (has_manifest) {
      if (auto expanded = expand_manifest(args)) return dispatch(*expanded, out, err);
    }
  }

  CLI::App app{"tbvi: importance-weighted variational autoencoders and gradient SNR experiments"};
  app.require_subcommand(1);
  TrainFlags train_flags;
  EvalFlags eval_flags;
  SnrFlags snr_flags;
  PlotFlags plot_flags;
  SyntheticFlags synthetic_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_train_options(*train_cmd, train_flags);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_eval_options(*eval_cmd, eval_flags);
  auto* snr_cmd = app.add_subcommand("snr", "gradient SNR sweep on the Gaussian testbed");
  add_snr_options(*snr_cmd, snr_flags);
  auto* plot_cmd = app.add_subcommand("plot", "SVG training curves from metrics CSVs");
  plot_cmd->add_option("csv", plot_flags.csvs, "metrics.csv files")->required();
  plot_cmd->add_option("--window", plot_flags.window, "rolling window; 1 disables smoothing");
  plot_cmd->add_option("--out", plot_flags.out)->required();
  plot_cmd->add_flag("--force", plot_flags.force);
  auto* synthetic_cmd = app.add_subcommand("make-synthetic", "write synthetic stroke datasets as IDX files");
  synthetic_cmd->add_option("--datasets", synthetic_flags.datasets);
  synthetic_cmd->add_option("--train-count", synthetic_flags.train_count);
  synthetic_cmd->add_option("--test-count", synthetic_flags.test_count);
  synthetic_cmd->add_option("--seed", synthetic_flags.seed);
  synthetic_cmd->add_option("--out", synthetic_flags.out)->required();
  synthetic_cmd->add_flag("--force", synthetic_flags.force);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (train_cmd->parsed()) return cmd_train(train_flags, out, err);
  if (eval_cmd->parsed()) return cmd_eval(eval_flags, out);
  if (snr_cmd->parsed()) return cmd_snr(snr_flags, out);
  if (plot_cmd->parsed()) return cmd_plot(plot_flags, out);
  return cmd_make_synthetic(synthetic_flags, out);
}

}  // namespace

std::vector<double> rolling_mean(const std::vector<double>& values, std::size_t window) {
  if (window < 1) throw UsageError("rolling window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const std::size_t n = std::min(window, t + 1);
    double total = 0.0;
    for (std::size_t i = t + 1 - n; i <= t; ++i) total += values[i];
    out[t] = total / static_cast<double>(n);
  }
  return out;
}

std::string content_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &length, EVP_sha1(), nullptr) != 1) {
    throw Error("sha1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::vector<long long> parse_int_list(const std::string& text) {
  std::vector<long long> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::logic_error&) {
      throw UsageError("not an integer: '" + item + "'");
    }
    if (used != item.size()) throw UsageError("not an integer: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tbvi::cli
