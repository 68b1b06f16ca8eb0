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

#include "doctest.h"
#include "tbvi/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

using namespace tbvi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tbvi_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainConfig small_run(Family family, Index epochs) {
  TrainConfig c;
  c.model = {784, 32, 4, 2};
  c.bound = BoundConfig::defaults(family);
  c.epochs = epochs;
  c.eval_every = 1;
  c.eval_items = 16;
  c.eval_K = 8;
  c.checkpoint_every = 1;
  c.record_wall_time = false;
  return c;
}

const ImageSet& train_images() {
  static const ImageSet s = synthetic_strokes(64, 3, "mnist");
  return s;
}

const ImageSet& test_images() {
  static const ImageSet s = synthetic_strokes(24, 3, "mnist", Split::kTest);
  return s;
}

Checkpoint sample_checkpoint(bool learnable) {
  TrainConfig c = small_run(Family::kCiwae, 1);
  c.bound.learnable_beta = learnable;
  c.bound.beta = 0.3;
  Checkpoint ck = initial_state(c);
  ck.epoch = 7;
  ck.params.phi[0].value(0, 0) = -0.0;
  ck.params.theta[1].value(0, 2) = 1e-310;  // subnormal survives
  ck.adam_phi.t = 12;
  ck.adam_phi.m[0].value.setConstant(0.25);
  return ck;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  CHECK(lr_schedule(0) == 1e-3);
  CHECK(lr_schedule(1) == doctest::Approx(1e-3 * std::pow(10.0, -1.0 / 7)));
  CHECK(lr_schedule(3) == lr_schedule(1));
  CHECK(lr_schedule(4) == doctest::Approx(1e-3 * std::pow(10.0, -2.0 / 7)));
  CHECK(lr_schedule(3279) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(3280) == lr_schedule(3279));
  CHECK(lr_schedule(100000) == lr_schedule(3279));
  Index total = 0, length = 1;
  for (Index i = 0; i < kScheduleSegments; ++i, length *= 3) total += length;
  CHECK(total == kScheduleEpochs);
  // Exactly eight distinct rates, changing at the segment boundaries.
  Index changes = 0;
  for (Index e = 1; e < kScheduleEpochs; ++e) changes += lr_schedule(e) != lr_schedule(e - 1);
  CHECK(changes == kScheduleSegments - 1);
  CHECK(lr_schedule(1092) != lr_schedule(1093));
  CHECK_THROWS_AS(lr_schedule(-1), ConfigError);
}

TEST_CASE("adam: hand-evaluated first step, zero gradient, coordinate independence") {
  ParamList p{{"w", Matrix::Zero(1, 3)}};
  AdamState s = AdamState::like(p);
  adam_step(s, p, {{"w", Matrix::Constant(1, 3, 1.0)}}, 1e-3);
  CHECK(s.t == 1);
  CHECK(p[0].value(0, 0) == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-14));
  CHECK(p[0].value(0, 0) == p[0].value(0, 2));

  ParamList q{{"w", Matrix::Constant(2, 2, 0.7)}};
  AdamState z = AdamState::like(q);
  adam_step(z, q, {{"w", Matrix::Zero(2, 2)}}, 1e-3);
  CHECK(z.t == 1);
  CHECK(q[0].value == Matrix::Constant(2, 2, 0.7));

  // Same gradient history on two coordinates: same trajectory.
  ParamList r{{"w", Matrix::Zero(1, 2)}};
  AdamState rs = AdamState::like(r);
  for (double g : {0.3, -1.2, 2.0, 0.0}) {
    adam_step(rs, r, {{"w", Matrix::Constant(1, 2, g)}}, 1e-2);
    CHECK(r[0].value(0, 0) == r[0].value(0, 1));
    CHECK((rs.v[0].value.array() >= 0).all());
  }
  CHECK(rs.t == 4);
}

TEST_CASE("adam aborts on a non-finite gradient without touching state") {
  ParamList p{{"w", Matrix::Ones(1, 2)}, {"b", Matrix::Ones(1, 1)}};
  AdamState s = AdamState::like(p);
  const ParamList before = p;
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(s, p, {{"w", Matrix::Ones(1, 2)}, {"b", bad}}, 1e-3, "epoch 4 batch 2");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 4 batch 2") != std::string::npos);
  }
  CHECK(p == before);
  CHECK(s.t == 0);
  CHECK_THROWS_AS(adam_step(s, p, {{"w", Matrix::Ones(2, 2)}, {"b", bad}}, 1e-3), DimensionError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  for (bool learnable : {false, true}) {
    const Checkpoint ck = sample_checkpoint(learnable);
    const auto bytes = serialize_checkpoint(ck);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TBVI");
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back == ck);
    CHECK(std::signbit(back.params.phi[0].value(0, 0)));
    CHECK(back.params.theta[1].value(0, 2) == 1e-310);
    CHECK(back.adam_beta.has_value() == learnable);
    CHECK(serialize_checkpoint(back) == bytes);
  }
  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  const Checkpoint ck = sample_checkpoint(true);
  save_checkpoint(ck, dir / "a.tbvi");
  CHECK(load_checkpoint(dir / "a.tbvi") == ck);
  CHECK_FALSE(fs::exists(dir / "a.tbvi.tmp"));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.tbvi"), IoError);
  CHECK_THROWS_AS(save_checkpoint(ck, dir / "no" / "such" / "dir" / "x.tbvi"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto bytes = serialize_checkpoint(sample_checkpoint(false));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{13}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_checkpoint(std::span(bytes.data(), cut)), IntegrityError);
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), IntegrityError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), IntegrityError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(trailing), IntegrityError);
}

TEST_CASE("resume guards") {
  TrainConfig ref = small_run(Family::kMiwae, 3);
  ref.model = ModelConfig::referential();
  const Checkpoint ck = initial_state(ref);
  TrainConfig larger = ref;
  larger.model = ModelConfig::larger();
  CHECK_THROWS_AS(check_resume_compatible(larger, ck), ConfigError);
  CHECK_THROWS_AS(train(larger, train_images(), nullptr, ck), ConfigError);
  TrainConfig other = ref;
  other.bound.K = 4;
  CHECK_THROWS_AS(check_resume_compatible(other, ck), ConfigError);
  other = ref;
  other.seed = 2;
  CHECK_THROWS_AS(check_resume_compatible(other, ck), ConfigError);
  other = ref;
  other.dataset = "omniglot";
  CHECK_THROWS_AS(check_resume_compatible(other, ck), ConfigError);
  Checkpoint late = ck;
  late.epoch = 4;
  CHECK_THROWS_AS(check_resume_compatible(ref, late), ConfigError);
  CHECK_NOTHROW(check_resume_compatible(ref, ck));
}

TEST_CASE("train config validation and defaults") {
  CHECK(TrainConfig::default_epochs("mnist") == 3280);
  CHECK(TrainConfig::default_epochs("omniglot") == 1000);
  TrainConfig c = small_run(Family::kVae, 1);
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_run(Family::kCiwae, 1);
  c.bound.learnable_beta = true;
  c.bound.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.bound.beta = 0.25;
  const Checkpoint ck = initial_state(c);
  CHECK(ck.bound.effective_beta() == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(ck.adam_beta.has_value());
  CHECK_THROWS_AS(train(small_run(Family::kVae, 1), synthetic_strokes(0, 1), nullptr), DimensionError);
}

TEST_CASE("two-epoch smoke run improves the train bound for every family") {
  for (Family f : {Family::kVae, Family::kIwae, Family::kMiwae, Family::kCiwae, Family::kPiwae}) {
    TrainConfig c = small_run(f, 2);
    c.model = ModelConfig::referential();
    c.eval_every = 0;
    const TrainResult r = train(c, train_images(), nullptr);
    REQUIRE(r.log.size() == 2);
    CAPTURE(to_string(f));
    CHECK(r.log[1].train_elbo > r.log[0].train_elbo);
    CHECK(r.final_state.epoch == 2);
    CHECK(r.final_state.adam_phi.t == 8);
    CHECK(r.final_state.adam_theta.t == 8);
  }
}

TEST_CASE("piwae runs two optimizers; other families step both groups together") {
  const TrainResult p = train(small_run(Family::kPiwae, 1), train_images(), nullptr);
  const Checkpoint start = initial_state(small_run(Family::kPiwae, 1));
  CHECK_FALSE(p.final_state.params.phi == start.params.phi);
  CHECK_FALSE(p.final_state.params.theta == start.params.theta);
  CHECK_FALSE(p.final_state.adam_phi.m == p.final_state.adam_theta.m);
  CHECK_FALSE(p.final_state.adam_beta.has_value());
}

TEST_CASE("identical config and seed give bit-identical artifacts; resume matches") {
  TrainConfig c = small_run(Family::kMiwae, 3);
  c.out_dir = scratch("det_a");
  const TrainResult a = train(c, train_images(), &test_images());
  TrainConfig c2 = c;
  c2.out_dir = scratch("det_b");
  const TrainResult b = train(c2, train_images(), &test_images());
  CHECK(a.final_state == b.final_state);
  CHECK(slurp(c.out_dir / "final.tbvi") == slurp(c2.out_dir / "final.tbvi"));
  CHECK(slurp(c.out_dir / "metrics.csv") == slurp(c2.out_dir / "metrics.csv"));
  CHECK(slurp(c.out_dir / "checkpoints" / "epoch-000002.tbvi") ==
        slurp(c2.out_dir / "checkpoints" / "epoch-000002.tbvi"));

  const auto rows = parse_epoch_csv(slurp(c.out_dir / "metrics.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].epoch == 3);
  CHECK(std::isfinite(rows[2].iwae64));
  CHECK(std::isnan(rows[2].logpx));
  CHECK(std::isnan(rows[2].beta));

  // Interrupt the same run after epoch 1, then resume from its checkpoint.
  TrainConfig c3 = c;
  c3.out_dir = scratch("det_c");
  struct Interrupted {};
  CHECK_THROWS_AS(train(c3, train_images(), &test_images(), std::nullopt,
                        [](const EpochRow& row) {
                          if (row.epoch == 1) throw Interrupted{};
                        }),
                  Interrupted);
  const Checkpoint at1 = load_checkpoint(c3.out_dir / "checkpoints" / "epoch-000001.tbvi");
  CHECK(at1.epoch == 1);
  const TrainResult resumed = train(c3, train_images(), &test_images(), at1);
  CHECK(resumed.final_state == a.final_state);
  CHECK(slurp(c3.out_dir / "final.tbvi") == slurp(c.out_dir / "final.tbvi"));
  CHECK(slurp(c3.out_dir / "metrics.csv") == slurp(c.out_dir / "metrics.csv"));
  for (const auto& d : {c.out_dir, c2.out_dir, c3.out_dir}) fs::remove_all(d);
}

TEST_CASE("epoch csv round trip") {
  EpochRow r;
  r.epoch = 3;
  r.lr = lr_schedule(2);
  r.train_elbo = -123.456;
  r.iwae64 = -120.5;
  r.logpx = -119.25;
  r.beta = 0.4;
  r.seconds = 1.5;
  const std::string csv = epoch_csv({r, EpochRow{}});
  CHECK(csv.rfind("epoch,lr,train_elbo,iwae64,logpx,minus_kl,beta,seconds\r\n", 0) == 0);
  const auto back = parse_epoch_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].lr == r.lr);
  CHECK(back[0].train_elbo == r.train_elbo);
  CHECK(back[0].minus_kl() == r.minus_kl());
  CHECK(std::isnan(back[1].iwae64));
  CHECK_THROWS_AS(parse_epoch_csv("epoch,lr\r\n1,2\r\n"), FormatError);
}

TEST_CASE("learnable beta with a single sample never moves") {
  // K = 1: the two bounds coincide on every batch, so grad_beta is exactly 0.
  TrainConfig c = small_run(Family::kCiwae, 2);
  c.bound.K = 1;
  c.bound.M = 1;
  c.bound.learnable_beta = true;
  c.bound.beta = 0.5;
  c.eval_every = 0;
  const TrainResult r = train(c, train_images(), nullptr);
  CHECK(r.final_state.bound.effective_beta() == 0.5);
  CHECK(r.log.back().beta == 0.5);
  CHECK(r.final_state.adam_beta->t == 8);

  c.bound.K = 16;
  const TrainResult moved = train(c, train_images(), nullptr);
  CHECK(moved.final_state.bound.effective_beta() != 0.5);
}

TEST_CASE("cross-dataset evaluation of a checkpoint") {
  const Checkpoint ck = initial_state(small_run(Family::kIwae, 1));
  EvalOptions opt;
  opt.K_iwae = 4;
  opt.K_logpx = 16;
  opt.logpx_chunks = 2;
  const ImageSet other = synthetic_strokes(6, 9, "omniglot", Split::kTest);
  const MetricRow row = cross_dataset_eval(ck, other, opt);
  CHECK(row.dataset_trained == "mnist");
  CHECK(row.dataset_evaluated == "omniglot");
  CHECK(row.n_items == 6);
  CHECK(row.model_id == describe(ck.bound));
  ImageSet tiny = other;
  tiny.rows = tiny.cols = 10;
  tiny.pixels = Matrix::Zero(2, 100);
  CHECK_THROWS_AS(cross_dataset_eval(ck, tiny, opt), DimensionError);
}
