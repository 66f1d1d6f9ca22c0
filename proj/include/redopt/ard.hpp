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

/**
 * @file ard.hpp
 *
 * Bayesian linear regression for the user experience model
 *
 *   u(r) = <theta, phi(r)> + eps,   eps ~ N(0, noise_sd^2).
 *
 * fit_prior() runs automatic relevance determination (evidence maximization
 * with one precision per coefficient) on pooled historical data and turns the
 * converged posterior into a diagonal Gaussian prior. posterior_update()
 * conditions that prior, widened by `scale`, on the observations of one app.
 */

#ifndef REDOPT_ARD_HPP
#define REDOPT_ARD_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "redopt/domain.hpp"
#include "redopt/error.hpp"
#include "redopt/random.hpp"

namespace redopt {

using WeightVector = Eigen::VectorXd;

/// Diagonal Gaussian prior N(mean, scale * diag(stdev)^2) and the
/// observation noise of the linear model.
struct PriorParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;
  double noise_sd = 1.0;
  double scale = 20.0;

  Eigen::Index dim() const noexcept { return mean.size(); }

  void validate() const {
    if (mean.size() == 0) fail(ErrorCode::kDimension, "prior has dimension 0");
    if (stdev.size() != mean.size())
      fail(ErrorCode::kDimension, "prior mean and stdev differ in dimension");
    if (!mean.allFinite()) fail(ErrorCode::kValidation, "prior mean must be finite");
    if (!stdev.allFinite() || (stdev.array() <= 0.0).any())
      fail(ErrorCode::kValidation, "prior stdev must be positive");
    if (!std::isfinite(noise_sd) || noise_sd <= 0.0)
      fail(ErrorCode::kValidation, "noise_sd must be positive");
    if (!std::isfinite(scale) || scale <= 0.0)
      fail(ErrorCode::kValidation, "scale must be positive");
  }
};

/// Uninformative reference prior: zero mean, unit stdev.
inline PriorParams flat_prior(Eigen::Index dim, double noise_sd, double scale = 1.0) {
  return PriorParams{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim), noise_sd,
                     scale};
}

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// A labelled point for posterior conditioning.
struct Observation {
  FeatureVector features;
  UserScore score;
};

struct ArdOptions {
  double tolerance = 1e-6;
  int max_iterations = 300;
  double scale = 20.0;
  /// Coefficients whose precision exceeds this are dropped from the model.
  double prune_precision = 1e4;
};

struct ArdDiagnostics {
  int iterations = 0;
  bool converged = false;
  std::vector<Eigen::Index> pruned;
  std::string warning;
};

namespace detail {

/// Noise precision is capped so that noiseless data stays well conditioned.
inline constexpr double kMaxNoisePrecision = 1e12;
/// Prior variance reported for pruned coefficients (precision 1e12).
inline constexpr double kPrunedVariance = 1e-12;
inline constexpr double kFactorJitter = 1e-10;

/// Inverse of a symmetric positive definite matrix, retrying once with
/// diagonal jitter.
inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    llt.compute(m + kFactorJitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::kNumerical, "matrix is not positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  return 0.5 * (inv + inv.transpose());
}

inline void check_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size())
    fail(ErrorCode::kDimension, "design rows and targets differ in length");
  if (x.rows() < 2) fail(ErrorCode::kValidation, "need at least 2 historical entries");
  if (x.cols() == 0) fail(ErrorCode::kDimension, "design has no columns");
  if (!x.allFinite() || !y.allFinite())
    fail(ErrorCode::kValidation, "historical data must be finite");
}

}  // namespace detail

/**
 * ARD evidence maximization on a dense design. Per-coefficient precisions a
 * and the noise precision b follow the effective-degrees-of-freedom updates
 *
 *   gamma_j = 1 - a_j S_jj,   a_j <- gamma_j / m_j^2,
 *   b <- (N - sum gamma) / |y - X m|^2,
 *
 * until the largest relative change drops below the tolerance. Columns that
 * are constant across all rows are collinear with the intercept; only the
 * last such nonzero column is kept.
 */
inline PriorParams fit_ard(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const ArdOptions& options = {},
                           ArdDiagnostics* diagnostics = nullptr) {
  detail::check_design(x, y);
  if (!(options.scale > 0.0) || !std::isfinite(options.scale))
    fail(ErrorCode::kValidation, "scale must be positive");

  const auto n = x.rows();
  const auto d = x.cols();
  ArdDiagnostics diag;

  std::vector<bool> active(static_cast<std::size_t>(d), true);
  Eigen::Index kept_constant = -1;
  for (Eigen::Index j = d - 1; j >= 0; --j) {
    const auto col = x.col(j);
    const bool constant = (col.array() == col[0]).all();
    if (!constant) continue;
    if (col[0] != 0.0 && kept_constant < 0) {
      kept_constant = j;
      continue;
    }
    active[static_cast<std::size_t>(j)] = false;
    diag.pruned.push_back(j);
  }

  Eigen::VectorXd a = Eigen::VectorXd::Ones(d);
  const double y_var = (y.array() - y.mean()).square().sum() / static_cast<double>(n);
  double b = y_var > 1e-12 ? 1.0 / y_var : detail::kMaxNoisePrecision;

  Eigen::MatrixXd sigma;
  Eigen::VectorXd m;
  std::vector<Eigen::Index> idx;

  // Posterior over the active coefficients for the current (a, b).
  const auto solve = [&]() {
    idx.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (active[static_cast<std::size_t>(j)]) idx.push_back(j);
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd xa(n, k);
    for (Eigen::Index c = 0; c < k; ++c) xa.col(c) = x.col(idx[static_cast<std::size_t>(c)]);
    Eigen::MatrixXd precision = b * xa.transpose() * xa;
    for (Eigen::Index c = 0; c < k; ++c) precision(c, c) += a[idx[static_cast<std::size_t>(c)]];
    sigma = detail::spd_inverse(precision);
    m = b * sigma * (xa.transpose() * y);
    return xa;
  };

  for (int it = 1; it <= options.max_iterations; ++it) {
    diag.iterations = it;
    if (std::none_of(active.begin(), active.end(), [](bool v) { return v; })) break;
    const Eigen::MatrixXd xa = solve();
    const auto k = static_cast<Eigen::Index>(idx.size());

    double gamma_sum = 0.0;
    double max_change = 0.0;
    bool pruned_now = false;
    Eigen::VectorXd a_next = a;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto j = idx[static_cast<std::size_t>(c)];
      const double gamma = std::clamp(1.0 - a[j] * sigma(c, c), 0.0, 1.0);
      gamma_sum += gamma;
      const double m2 = m[c] * m[c];
      const double updated = m2 > 0.0 ? gamma / m2 : std::numeric_limits<double>::infinity();
      if (!(updated <= options.prune_precision)) {
        active[static_cast<std::size_t>(j)] = false;
        diag.pruned.push_back(j);
        pruned_now = true;
        continue;
      }
      a_next[j] = std::max(updated, std::numeric_limits<double>::min());
      max_change = std::max(max_change, std::abs(a_next[j] - a[j]) / a[j]);
    }
    const double rss = (y - xa * m).squaredNorm();
    const double dof = std::max(static_cast<double>(n) - gamma_sum, 1e-12);
    const double b_next =
        rss > 0.0 ? std::min(dof / rss, detail::kMaxNoisePrecision) : detail::kMaxNoisePrecision;
    max_change = std::max(max_change, std::abs(b_next - b) / b);
    a = a_next;
    b = b_next;
    if (!pruned_now && max_change < options.tolerance) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged)
    diag.warning = "ARD did not converge within " + std::to_string(options.max_iterations) +
                   " iterations; returning last iterate";

  PriorParams prior;
  prior.mean = Eigen::VectorXd::Zero(d);
  prior.stdev = Eigen::VectorXd::Constant(d, std::sqrt(detail::kPrunedVariance));
  if (std::any_of(active.begin(), active.end(), [](bool v) { return v; })) {
    solve();
    for (std::size_t c = 0; c < idx.size(); ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      prior.mean[idx[c]] = m[ci];
      prior.stdev[idx[c]] = std::sqrt(std::max(sigma(ci, ci), detail::kPrunedVariance));
    }
  }
  prior.noise_sd = std::sqrt(1.0 / b);
  prior.scale = options.scale;
  std::sort(diag.pruned.begin(), diag.pruned.end());
  if (diagnostics) *diagnostics = std::move(diag);
  return prior;
}

/// Fits the historical prior on entries pooled across all apps.
inline PriorParams fit_prior(const HistoricalDataset& history, const ArdOptions& options = {},
                             ArdDiagnostics* diagnostics = nullptr) {
  if (history.entries.size() < 2)
    fail(ErrorCode::kValidation, "need at least 2 historical entries",
         std::to_string(history.entries.size()) + " given");
  const auto d = history.entries.front().features.size();
  const auto n = static_cast<Eigen::Index>(history.entries.size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = history.entries[static_cast<std::size_t>(i)];
    if (e.features.size() != d)
      fail(ErrorCode::kDimension, "historical feature dimensions differ", e.reduction_id);
    x.row(i) = e.features.transpose();
    y[i] = e.score.value();
  }
  return fit_ard(x, y, options, diagnostics);
}

/// Prior covariance scale * diag(stdev)^2 as a dense Gaussian.
inline Posterior widened_prior(const PriorParams& prior) {
  prior.validate();
  return Posterior{prior.mean, (prior.scale * prior.stdev.array().square()).matrix().asDiagonal()};
}

/// Conditions a Gaussian belief on observations with known noise.
inline Posterior condition(const Posterior& belief, std::span<const Observation> data,
                           double noise_sd) {
  const auto d = belief.dim();
  for (const auto& o : data)
    if (o.features.size() != d)
      fail(ErrorCode::kDimension, "observation features do not match model dimension",
           std::to_string(o.features.size()) + " vs " + std::to_string(d));
  if (data.empty()) return belief;
  if (!(noise_sd > 0.0)) fail(ErrorCode::kValidation, "noise_sd must be positive");

  const double noise_precision = 1.0 / (noise_sd * noise_sd);
  Eigen::MatrixXd precision = detail::spd_inverse(belief.covariance);
  Eigen::VectorXd h = precision * belief.mean;
  for (const auto& o : data) {
    precision.noalias() += noise_precision * o.features * o.features.transpose();
    h += noise_precision * o.score.value() * o.features;
  }
  Posterior out;
  out.covariance = detail::spd_inverse(precision);
  out.mean = out.covariance * h;
  return out;
}

/// Posterior p(theta | prior, data): the widened prior conditioned on data.
inline Posterior posterior_update(const PriorParams& prior, std::span<const Observation> data) {
  const auto d = prior.dim();
  for (const auto& o : data)
    if (o.features.size() != d)
      fail(ErrorCode::kDimension, "observation features do not match prior dimension",
           std::to_string(o.features.size()) + " vs " + std::to_string(d));
  if (data.empty()) return widened_prior(prior);

  // Diagonal prior precision is formed directly rather than by inversion.
  prior.validate();
  const Eigen::VectorXd prior_precision =
      (prior.scale * prior.stdev.array().square()).inverse().matrix();
  const double noise_precision = 1.0 / (prior.noise_sd * prior.noise_sd);
  Eigen::MatrixXd precision = prior_precision.asDiagonal();
  Eigen::VectorXd h = prior_precision.cwiseProduct(prior.mean);
  for (const auto& o : data) {
    precision.noalias() += noise_precision * o.features * o.features.transpose();
    h += noise_precision * o.score.value() * o.features;
  }
  Posterior out;
  out.covariance = detail::spd_inverse(precision);
  out.mean = out.covariance * h;
  return out;
}

/// Covariances whose diagonal never exceeds this are treated as point masses.
inline constexpr double kPointMassVariance = 1e-12;

/// One draw theta ~ N(mean, covariance) through a Cholesky factor.
inline WeightVector sample_weights(const Posterior& posterior, Rng& rng) {
  const auto d = posterior.dim();
  if (posterior.covariance.rows() != d || posterior.covariance.cols() != d)
    fail(ErrorCode::kDimension, "covariance does not match mean");
  if (d == 0 || posterior.covariance.diagonal().maxCoeff() <= kPointMassVariance)
    return posterior.mean;

  Eigen::LLT<Eigen::MatrixXd> llt(posterior.covariance);
  if (llt.info() != Eigen::Success) {
    llt.compute(posterior.covariance + detail::kFactorJitter * Eigen::MatrixXd::Identity(d, d));
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::kNumerical, "posterior covariance is not positive definite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
  return posterior.mean + llt.matrixL() * z;
}

/// Mode of a Gaussian posterior.
inline WeightVector map_estimate(const Posterior& posterior) { return posterior.mean; }

inline double predict_raw(const WeightVector& weights, const FeatureVector& features) {
  if (weights.size() != features.size())
    fail(ErrorCode::kDimension, "weights and features differ in dimension",
         std::to_string(weights.size()) + " vs " + std::to_string(features.size()));
  return weights.dot(features);
}

/// Linear prediction clamped into [0, 1].
inline UserScore predict_score(const WeightVector& weights, const FeatureVector& features) {
  return UserScore::clamped(predict_raw(weights, features));
}

}  // namespace redopt

#endif  // REDOPT_ARD_HPP
