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
#include "tbvi/gradcheck.hpp"
#include "tbvi/model.hpp"
#include "tbvi/rng.hpp"

#include <algorithm>
#include <cmath>

namespace tbvi::testing {

inline ModelConfig toy_config() { return {4, 3, 2, 2}; }

// Toy model with non-zero biases so every term carries gradient.
inline ModelParams toy_params(std::uint64_t seed = 7) {
  ModelParams p = init_params(toy_config(), seed);
  const CounterRng r(seed, StreamTag::kData, {99});
  std::uint64_t k = 0;
  for (ParamList* group : {&p.phi, &p.theta}) {
    for (auto& t : *group) {
      if (t.value.rows() == 1) {
        for (Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = 0.3 * r.normal_at(k++);
      }
    }
  }
  return p;
}

inline Matrix toy_batch() {
  Matrix x(2, 4);
  x << 1, 0, 1, 1, 0, 1, 1, 0;
  return x;
}

inline ParamList concat(const ParamList& a, const ParamList& b) {
  ParamList out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline ModelParams split(const ModelParams& like, const ParamList& all) {
  ModelParams p = like;
  const auto n = static_cast<std::ptrdiff_t>(like.phi.size());
  p.phi.assign(all.begin(), all.begin() + n);
  p.theta.assign(all.begin() + n, all.end());
  return p;
}

inline double objective_of(const BoundConfig& c, const ModelParams& p, const Matrix& x, const Matrix& noise) {
  const LogWeightMatrix lw = sample_log_weights(p, x, c.M, c.K, noise);
  switch (c.family) {
    case Family::kVae:
      return elbo_vae(lw).scalar();
    case Family::kIwae:
      return elbo_iwae(lw).scalar();
    case Family::kCiwae:
      return elbo_ciwae(lw, c.effective_beta()).scalar();
    default:
      return elbo_miwae(lw).scalar();
  }
}

// Worst relative error of the family gradient over phi and theta.
inline double family_gradient_error(const BoundConfig& c, const ModelParams& p, const Matrix& x,
                                    const Matrix& noise) {
  LogWeightMatrix lw = sample_log_weights(p, x, c.M, c.K, noise);
  const GradEstimate g = gradients(c, lw);
  auto f = [&](const ParamList& all) { return objective_of(c, split(p, all), x, noise); };
  return finite_diff_check(f, concat(p.phi, p.theta), concat(g.grad_phi, g.grad_theta));
}

struct PiwaeErrors {
  double phi = 0.0;
  double theta = 0.0;
};

// phi against MIWAE(M, L) under noise_phi, theta against IWAE(K) under noise_theta.
inline PiwaeErrors piwae_gradient_errors(const ModelParams& p, const Matrix& x, Index M, Index L, Index K,
                                         const Matrix& noise_phi, const Matrix& noise_theta) {
  const GradEstimate g = gradients_piwae(p, x, M, L, K, noise_phi, noise_theta);
  PiwaeErrors out;
  out.phi = finite_diff_check(
      [&](const ParamList& phi) {
        ModelParams q = p;
        q.phi = phi;
        return elbo_miwae(sample_log_weights(q, x, M, L, noise_phi)).scalar();
      },
      p.phi, g.grad_phi);
  out.theta = finite_diff_check(
      [&](const ParamList& theta) {
        ModelParams q = p;
        q.theta = theta;
        return elbo_miwae(sample_log_weights(q, x, 1, K, noise_theta)).scalar();
      },
      p.theta, g.grad_theta);
  return out;
}

inline double max_abs_diff(const ParamList& a, const ParamList& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, (a[i].value - b[i].value).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline Index mirror(Index i, Index n) {
  while (i < 0 || i >= n) i = i < 0 ? -1 - i : 2 * n - 1 - i;
  return i;
}

// Windowed SSIM written straight from the definition: 2-D weights, explicit
// local moments, mean of the map.
inline double brute_ssim(const Matrix& a, const Matrix& b) {
  double g[11], total = 0;
  for (int i = 0; i < 11; ++i) total += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
  double acc = 0;
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < a.cols(); ++c) {
      double ma = 0, mb = 0;
      for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
          const double w = g[u] * g[v] / (total * total);
          ma += w * a(mirror(r + u - 5, a.rows()), mirror(c + v - 5, a.cols()));
          mb += w * b(mirror(r + u - 5, a.rows()), mirror(c + v - 5, a.cols()));
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
          const double w = g[u] * g[v] / (total * total);
          const double da = a(mirror(r + u - 5, a.rows()), mirror(c + v - 5, a.cols())) - ma;
          const double db = b(mirror(r + u - 5, a.rows()), mirror(c + v - 5, a.cols())) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      }
      const double c1 = 1e-4, c2 = 9e-4;
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace tbvi::testing
