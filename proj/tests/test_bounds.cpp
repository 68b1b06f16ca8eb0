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
#include "support.hpp"
#include "tbvi/bounds.hpp"

#include <cmath>

using namespace tbvi;
using namespace tbvi::testing;

namespace {

Matrix noise_for(Index rows, std::uint64_t id) { return draw_noise(CounterRng(5, StreamTag::kNoise, {id}), rows, 2); }

BoundConfig config(Family f, Index M, Index K, double beta = 0.5) {
  BoundConfig c;
  c.family = f;
  c.M = M;
  c.K = K;
  c.L = 1;
  c.beta = beta;
  return c;
}

GradEstimate grads(const BoundConfig& c, const ModelParams& p, const Matrix& x, const Matrix& noise) {
  LogWeightMatrix lw = sample_log_weights(p, x, c.M, c.K, noise);
  return gradients(c, lw);
}

}  // namespace

TEST_CASE("autodiff gradients of every family match finite differences") {
  const ModelParams p = toy_params();
  const Matrix x = toy_batch();
  CHECK(family_gradient_error(config(Family::kVae, 1, 1), p, x, noise_for(2, 1)) < 1e-4);
  CHECK(family_gradient_error(config(Family::kVae, 3, 1), p, x, noise_for(6, 2)) < 1e-4);
  CHECK(family_gradient_error(config(Family::kIwae, 1, 4), p, x, noise_for(8, 3)) < 1e-4);
  CHECK(family_gradient_error(config(Family::kMiwae, 2, 2), p, x, noise_for(8, 4)) < 1e-4);
  CHECK(family_gradient_error(config(Family::kCiwae, 1, 4, 0.5), p, x, noise_for(8, 5)) < 1e-4);
  const PiwaeErrors e = piwae_gradient_errors(p, x, 2, 2, 4, noise_for(8, 6), noise_for(8, 7));
  CHECK(e.phi < 1e-4);
  CHECK(e.theta < 1e-4);
}

TEST_CASE("estimator identities under shared samples") {
  const ModelParams p = toy_params();
  const Matrix x = toy_batch();
  const Matrix n1 = noise_for(2, 10);
  const Matrix n4 = noise_for(8, 11);
  constexpr double tol = 1e-10;

  // IWAE with one sample is the VAE bound.
  CHECK(std::abs(objective_of(config(Family::kIwae, 1, 1), p, x, n1) -
                 objective_of(config(Family::kVae, 1, 1), p, x, n1)) < tol);
  // MIWAE(M, 1) is the Monte Carlo VAE mean.
  CHECK(std::abs(objective_of(config(Family::kMiwae, 4, 1), p, x, n4) -
                 objective_of(config(Family::kVae, 4, 1), p, x, n4)) < tol);
  // MIWAE(1, K) is IWAE(K).
  CHECK(std::abs(objective_of(config(Family::kMiwae, 1, 4), p, x, n4) -
                 objective_of(config(Family::kIwae, 1, 4), p, x, n4)) < tol);
  CHECK(std::abs(objective_of(config(Family::kCiwae, 1, 4, 0.0), p, x, n4) -
                 objective_of(config(Family::kIwae, 1, 4), p, x, n4)) < tol);
  CHECK(std::abs(objective_of(config(Family::kCiwae, 1, 4, 1.0), p, x, n4) -
                 objective_of(config(Family::kVae, 4, 1), p, x, n4)) < tol);

  // Gradients follow the values.
  CHECK(max_abs_diff(grads(config(Family::kCiwae, 1, 4, 0.0), p, x, n4).grad_phi,
                     grads(config(Family::kIwae, 1, 4), p, x, n4).grad_phi) < tol);
  CHECK(max_abs_diff(grads(config(Family::kCiwae, 1, 4, 1.0), p, x, n4).grad_theta,
                     grads(config(Family::kVae, 4, 1), p, x, n4).grad_theta) < tol);

  // PIWAE's theta gradient is the IWAE(K) theta gradient on the same noise.
  const GradEstimate piwae = gradients_piwae(p, x, 2, 2, 4, noise_for(8, 12), n4);
  const GradEstimate iwae = grads(config(Family::kIwae, 1, 4), p, x, n4);
  CHECK(max_abs_diff(piwae.grad_theta, iwae.grad_theta) < tol);
  // Its phi gradient is the MIWAE(M, L) phi gradient.
  const GradEstimate miwae = grads(config(Family::kMiwae, 2, 2), p, x, noise_for(8, 12));
  CHECK(max_abs_diff(piwae.grad_phi, miwae.grad_phi) < tol);
}

TEST_CASE("scalar estimators agree with the batch estimators") {
  const ModelParams p = toy_params();
  const Matrix x = toy_batch();
  const LogWeightMatrix lw = sample_log_weights(p, x, 2, 3, noise_for(12, 20));
  double vae = 0, miwae = 0, ciwae = 0;
  for (Index b = 0; b < 2; ++b) {
    vae += elbo_vae(lw.item(b)) / 2;
    miwae += elbo_miwae(lw.item(b)) / 2;
    ciwae += elbo_ciwae(lw.item(b), 0.3) / 2;
  }
  CHECK(elbo_vae(lw).scalar() == doctest::Approx(vae).epsilon(1e-12));
  CHECK(elbo_miwae(lw).scalar() == doctest::Approx(miwae).epsilon(1e-12));
  CHECK(elbo_ciwae(lw, 0.3).scalar() == doctest::Approx(ciwae).epsilon(1e-12));
  CHECK_THROWS_AS(elbo_iwae(lw), ConfigError);
  CHECK_THROWS_AS(elbo_iwae(lw.item(0)), ConfigError);
  CHECK_THROWS_AS(elbo_ciwae(lw.item(0), 1.5), ConfigError);
}

TEST_CASE("per-realization ordering iwae >= ciwae >= vae") {
  const ModelParams p = toy_params();
  const Index n = 10000;
  const Matrix x = toy_batch().replicate(n / 2, 1);
  const LogWeightMatrix lw = sample_log_weights(p, x, 1, 8, CounterRng(3, StreamTag::kNoise, {}));
  Index violations = 0;
  for (Index b = 0; b < n; ++b) {
    const Matrix w = lw.item(b);
    const double iwae = elbo_iwae(w), ciwae = elbo_ciwae(w, 0.5), vae = elbo_vae(w);
    if (iwae < ciwae - 1e-10 || ciwae < vae - 1e-10) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("mean iwae bound is non-decreasing in K") {
  const ModelParams p = toy_params();
  const Index n = 4000;
  const Matrix x = toy_batch().replicate(n / 2, 1);
  double prev_mean = -1e300, prev_se = 0;
  for (Index K : {1, 2, 4, 8, 16}) {
    const LogWeightMatrix lw = sample_log_weights(p, x, 1, K, CounterRng(4, StreamTag::kNoise, {std::uint64_t(K)}));
    const Vector per = log_mean_exp_rows(lw.value());
    const double mean = per.mean();
    const double se = std::sqrt((per.array() - mean).square().sum() / (n - 1) / n);
    CHECK(mean >= prev_mean - 2 * std::hypot(se, prev_se));
    prev_mean = mean;
    prev_se = se;
  }
}

TEST_CASE("grad_beta") {
  // All-equal weights: the two bounds coincide and beta receives no signal.
  CHECK(grad_beta(Matrix::Constant(1, 16, -3.2), 0.0) == 0.0);
  CHECK(grad_beta(Matrix::Constant(4, 4, 7.0), 1.3) == 0.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = -1.0 - 0.0137 * i;
    CHECK(grad_beta(Matrix::Constant(20, 16, v), 0.0) == 0.0);
    CHECK(grad_beta(Matrix::Constant(3, 7, v), 0.4) == 0.0);
  }

  Matrix w(1, 5);
  w << -1.0, -4.0, 0.5, -2.0, -0.3;
  const double vae = elbo_vae(w), iwae = elbo_iwae(w);
  auto loss = [&](double r) {
    const double b = 1.0 / (1.0 + std::exp(-r));
    return -(b * vae + (1 - b) * iwae);
  };
  for (double r : {-2.0, 0.0, 0.7}) {
    const double fd = (loss(r + 1e-6) - loss(r - 1e-6)) / 2e-6;
    CHECK(grad_beta(w, r) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK(grad_beta(w, 0.0) > 0);  // minimization pushes beta down

  const ModelParams p = toy_params();
  BoundConfig c = config(Family::kCiwae, 1, 4);
  c.learnable_beta = true;
  c.beta_raw = 0.4;
  const GradEstimate g = grads(c, p, toy_batch(), noise_for(8, 30));
  REQUIRE(g.grad_beta.has_value());
  CHECK(*g.grad_beta == doctest::Approx(grad_beta(g.vae_value, g.iwae_value, 0.4)));
  CHECK(g.objective_value ==
        doctest::Approx(c.effective_beta() * g.vae_value + (1 - c.effective_beta()) * g.iwae_value));
}

TEST_CASE("bound config defaults and validation") {
  for (Family f : {Family::kVae, Family::kIwae, Family::kMiwae, Family::kCiwae, Family::kPiwae}) {
    const BoundConfig c = BoundConfig::defaults(f);
    CHECK_NOTHROW(c.validate());
    CHECK(c.budget() == 64);
    CHECK(parse_family(to_string(f)) == f);
  }
  CHECK(parse_family("MIWAE") == Family::kMiwae);
  CHECK_THROWS_AS(parse_family("rws"), ConfigError);
  CHECK_THROWS_AS(config(Family::kVae, 1, 4).validate(), ConfigError);
  CHECK_THROWS_AS(config(Family::kIwae, 2, 4).validate(), ConfigError);
  CHECK_THROWS_AS(config(Family::kMiwae, 0, 4).validate(), ConfigError);
  CHECK_THROWS_AS(config(Family::kCiwae, 1, 4, 1.5).validate(), ConfigError);
  BoundConfig learn = config(Family::kMiwae, 2, 2);
  learn.learnable_beta = true;
  CHECK_THROWS_AS(learn.validate(), ConfigError);
  learn.family = Family::kCiwae;
  learn.beta_raw = 0.0;
  CHECK(learn.effective_beta() == 0.5);
}

TEST_CASE("noise shape mismatches raise DimensionError") {
  const ModelParams p = toy_params();
  CHECK_THROWS_AS(sample_log_weights(p, toy_batch(), 2, 2, noise_for(7, 1)), DimensionError);
  CHECK_THROWS_AS(gradients_piwae(p, toy_batch(), 2, 2, 4, noise_for(8, 1), noise_for(4, 2)), DimensionError);
}

TEST_CASE("a consumed tape cannot be differentiated twice") {
  const ModelParams p = toy_params();
  LogWeightMatrix lw = sample_log_weights(p, toy_batch(), 1, 4, noise_for(8, 1));
  const BoundConfig c = config(Family::kIwae, 1, 4);
  gradients(c, lw);
  CHECK_THROWS_AS(gradients(c, lw), UsageError);
  CHECK_THROWS_AS(gradients(config(Family::kPiwae, 1, 4), lw), UsageError);
}
