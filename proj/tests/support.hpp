// Copyright 2026 The redopt Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared fixtures and independent reference computations for the tests.

#ifndef REDOPT_TESTS_SUPPORT_HPP
#define REDOPT_TESTS_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "redopt/ard.hpp"
#include "redopt/domain.hpp"
#include "redopt/random.hpp"

namespace redopt::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(REDOPT_DATA_DIR) / name;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("redopt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// App with n reductions, uniform features in [0, 1] plus bias, and savings
/// uniform in [0, 1].
inline App random_app(Rng& rng, int n, const std::string& id = "app") {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  App app;
  app.id = id;
  for (int k = 0; k < n; ++k) {
    Reduction r;
    r.id = "r" + std::to_string(100 + k);
    r.app_id = id;
    r.kind = static_cast<ReductionKind>(k % 8);
    r.views = {"v0"};
    std::vector<double> f(kDescriptiveFeatures);
    for (auto& x : f) x = unit(rng);
    r.features = with_bias(f);
    r.savings = {unit(rng), unit(rng), unit(rng)};
    app.reductions.push_back(std::move(r));
  }
  return app;
}

inline Specification random_spec(Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  double a = g(rng), b = g(rng), c = g(rng);
  const double s = a + b + c;
  a /= s;
  b /= s;
  return Specification(std::uniform_real_distribution<double>(0.0, 3.0)(rng), {a, b, 1.0 - a - b});
}

/// Exhaustive argmax of u + lambda * (a_cpu w_cpu + a_mem w_mem + a_net w_net),
/// ties to the smallest id.
inline std::string brute_force_argmax(const App& app, const std::vector<double>& u,
                                      const Specification& spec) {
  std::string best;
  double best_j = -1e300;
  for (std::size_t i = 0; i < app.reductions.size(); ++i) {
    const auto& w = app.reductions[i].savings;
    const double j = u[i] + spec.lambda() * (spec.alpha()[0] * w.cpu + spec.alpha()[1] * w.mem +
                                             spec.alpha()[2] * w.net);
    if (j > best_j || (j == best_j && app.reductions[i].id < best)) {
      best_j = j;
      best = app.reductions[i].id;
    }
  }
  return best;
}

/// Textbook conjugate update via dense LU inverses.
inline Posterior closed_form_posterior(const PriorParams& prior, const Eigen::MatrixXd& phi,
                                       const Eigen::VectorXd& y) {
  const Eigen::MatrixXd s0 = (prior.scale * prior.stdev.array().square()).matrix().asDiagonal();
  const Eigen::MatrixXd s0_inv = s0.fullPivLu().inverse();
  const double s2 = prior.noise_sd * prior.noise_sd;
  const Eigen::MatrixXd cov = (s0_inv + phi.transpose() * phi / s2).fullPivLu().inverse();
  const Eigen::VectorXd mean = cov * (s0_inv * prior.mean + phi.transpose() * y / s2);
  return {mean, cov};
}

}  // namespace redopt::testing

#endif  // REDOPT_TESTS_SUPPORT_HPP
