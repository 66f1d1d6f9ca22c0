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
 * @file domain.hpp
 *
 * Core vocabulary: resource usage specifications, resource savings, user
 * experience scores, reductions and apps, plus the resource-aware objective
 *
 *   J(r; lambda, alpha) = u(r) + lambda * <alpha, w(r)>
 *
 * and its normalized form rho used for evaluation.
 */

#ifndef REDOPT_DOMAIN_HPP
#define REDOPT_DOMAIN_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "redopt/error.hpp"

namespace redopt {

/// Resources tracked by a specification, in storage order.
enum class Resource : std::size_t { kCpu = 0, kMem = 1, kNet = 2 };
inline constexpr std::size_t kResourceCount = 3;
inline constexpr std::array<std::string_view, kResourceCount> kResourceNames = {
    "cpu", "mem", "net"};

/// Tolerance on sum(alpha) == 1.
inline constexpr double kSimplexTolerance = 1e-9;

/**
 * A resource usage specification (lambda, alpha). lambda trades total
 * resource savings against user experience; alpha distributes that weight
 * across cpu, memory and network and lies on the probability simplex.
 */
class Specification {
 public:
  Specification() : Specification(0.0, {0.0, 0.0, 1.0}) {}

  Specification(double lambda, std::array<double, kResourceCount> alpha)
      : lambda_(lambda), alpha_(alpha) {
    if (!std::isfinite(lambda_) || lambda_ < 0.0)
      fail(ErrorCode::kValidation, "lambda must be a finite nonnegative number",
           std::to_string(lambda_));
    double sum = 0.0;
    for (std::size_t i = 0; i < kResourceCount; ++i) {
      const double a = alpha_[i];
      if (!std::isfinite(a) || a < 0.0 || a > 1.0)
        fail(ErrorCode::kValidation,
             "alpha." + std::string(kResourceNames[i]) + " must lie in [0, 1]",
             std::to_string(a));
      sum += a;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
      fail(ErrorCode::kValidation, "alpha components must sum to 1",
           "sum = " + std::to_string(sum));
  }

  double lambda() const noexcept { return lambda_; }
  const std::array<double, kResourceCount>& alpha() const noexcept { return alpha_; }
  double alpha(Resource r) const noexcept {
    return alpha_[static_cast<std::size_t>(r)];
  }

  friend bool operator==(const Specification&, const Specification&) = default;

 private:
  double lambda_;
  std::array<double, kResourceCount> alpha_;
};

/// Fractional reduction in resource usage relative to the original app.
struct ResourceSavings {
  double cpu = 0.0;
  double mem = 0.0;
  double net = 0.0;

  std::array<double, kResourceCount> as_array() const { return {cpu, mem, net}; }

  void validate() const {
    const auto values = as_array();
    for (std::size_t i = 0; i < kResourceCount; ++i) {
      if (!std::isfinite(values[i]) || values[i] < 0.0 || values[i] > 1.0)
        fail(ErrorCode::kValidation,
             "savings." + std::string(kResourceNames[i]) + " must lie in [0, 1]",
             std::to_string(values[i]));
    }
  }

  friend bool operator==(const ResourceSavings&, const ResourceSavings&) = default;
};

/// The original app saves nothing.
inline constexpr ResourceSavings kOriginalSavings{};

/// Fraction of the original app's user experience retained, in [0, 1].
class UserScore {
 public:
  constexpr UserScore() = default;
  explicit UserScore(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0))
      fail(ErrorCode::kValidation, "user score must lie in [0, 1]",
           std::to_string(value));
  }

  /// Clamps any finite real into [0, 1].
  static UserScore clamped(double value) {
    if (std::isnan(value)) fail(ErrorCode::kValidation, "user score is NaN");
    return UserScore(std::clamp(value, 0.0, 1.0));
  }

  constexpr double value() const noexcept { return value_; }
  friend auto operator<=>(const UserScore&, const UserScore&) = default;

 private:
  double value_ = 0.0;
};

/// A single survey answer on the 1..9 satisfaction scale.
class RawRating {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 9;

  explicit RawRating(int value) : value_(value) {
    if (value < kMin || value > kMax)
      fail(ErrorCode::kValidation, "rating must be an integer in 1..9",
           std::to_string(value));
  }
  constexpr int value() const noexcept { return value_; }
  friend auto operator<=>(const RawRating&, const RawRating&) = default;

 private:
  int value_;
};

// ---------------------------------------------------------------------------
// Features

/// Number of descriptive features per reduction; a constant bias term is
/// appended after them.
inline constexpr std::size_t kDescriptiveFeatures = 15;
inline constexpr std::size_t kFeatureDim = kDescriptiveFeatures + 1;
inline constexpr std::size_t kBiasIndex = kDescriptiveFeatures;

/// Feature schema. The first ten describe the modification, the next five the
/// activity (screen) it is applied to.
inline constexpr std::array<std::string_view, kFeatureDim> kFeatureNames = {
    // reduction metrics
    "target_resolution",        // target edge length / 400px, 1 when unchanged, 0 when removed
    "pixel_fraction_removed",   // 1 - (target/source)^2
    "images_affected",          // affected image count / 10
    "transition_removed",       // 0/1
    "images_removed",           // 0/1
    "downscale_log2",           // log2(source/target) / 5
    "views_modified",           // modified view count / 5
    "primary_content",          // 0/1, modified images carry the screen's content
    "image_area_fraction",      // fraction of screen area covered by affected images
    "animation_seconds",        // removed animation duration in seconds
    // activity metrics
    "text_blocks",              // text block count / 20
    "median_font_size",         // median text size in sp / 24
    "activity_images",          // image count on the screen / 20
    "view_tree_depth",          // depth / 20
    "interactive_widgets",      // widget count / 20
    // bias
    "bias",
};

using FeatureVector = Eigen::VectorXd;

/// Appends the bias term to the 15 descriptive features.
inline FeatureVector with_bias(std::span<const double> descriptive) {
  if (descriptive.size() != kDescriptiveFeatures)
    fail(ErrorCode::kDimension,
         "expected " + std::to_string(kDescriptiveFeatures) + " features",
         "got " + std::to_string(descriptive.size()));
  FeatureVector phi(static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t i = 0; i < kDescriptiveFeatures; ++i) {
    if (!std::isfinite(descriptive[i]))
      fail(ErrorCode::kValidation, "feature values must be finite",
           std::string(kFeatureNames[i]));
    phi[static_cast<Eigen::Index>(i)] = descriptive[i];
  }
  phi[static_cast<Eigen::Index>(kBiasIndex)] = 1.0;
  return phi;
}

// ---------------------------------------------------------------------------
// Reductions and apps

enum class ReductionKind {
  kImageRemoval,
  kRes400,
  kRes200,
  kRes100,
  kRes50,
  kRes20,
  kTransitionRemoval,
  kImageAndTransition,
};

inline constexpr std::array<std::string_view, 8> kReductionKindNames = {
    "image_removal", "res400", "res200", "res100",
    "res50", "res20", "transition_removal", "image_and_transition"};

inline std::string_view to_string(ReductionKind kind) {
  return kReductionKindNames[static_cast<std::size_t>(kind)];
}

inline ReductionKind parse_reduction_kind(std::string_view name) {
  for (std::size_t i = 0; i < kReductionKindNames.size(); ++i)
    if (kReductionKindNames[i] == name) return static_cast<ReductionKind>(i);
  fail(ErrorCode::kValidation, "unknown reduction kind", std::string(name));
}

/// Human-readable description used by the rating UI.
inline std::string_view describe(ReductionKind kind) {
  switch (kind) {
    case ReductionKind::kImageRemoval: return "Images removed";
    case ReductionKind::kRes400: return "Image resolution reduced to 400x400px";
    case ReductionKind::kRes200: return "Image resolution reduced to 200x200px";
    case ReductionKind::kRes100: return "Image resolution reduced to 100x100px";
    case ReductionKind::kRes50: return "Image resolution reduced to 50x50px";
    case ReductionKind::kRes20: return "Image resolution reduced to 20x20px";
    case ReductionKind::kTransitionRemoval: return "Activity transitions removed";
    case ReductionKind::kImageAndTransition:
      return "Images reduced and transitions removed";
  }
  return "";
}

struct Reduction {
  std::string id;
  std::string app_id;
  ReductionKind kind = ReductionKind::kImageRemoval;
  std::vector<std::string> views;
  FeatureVector features = FeatureVector::Zero(kFeatureDim);
  ResourceSavings savings;
  std::vector<std::string> asset_refs;

  void validate() const {
    if (id.empty()) fail(ErrorCode::kValidation, "reduction id is empty");
    if (views.empty())
      fail(ErrorCode::kValidation, "reduction modifies no views", id);
    if (!features.allFinite())
      fail(ErrorCode::kValidation, "reduction features must be finite", id);
    savings.validate();
  }
};

struct App {
  std::string id;
  std::string category;
  std::vector<Reduction> reductions;

  const Reduction* find(std::string_view reduction_id) const {
    for (const auto& r : reductions)
      if (r.id == reduction_id) return &r;
    return nullptr;
  }

  const Reduction& at(std::string_view reduction_id) const {
    if (const auto* r = find(reduction_id)) return *r;
    fail(ErrorCode::kNotFound, "unknown reduction", std::string(reduction_id));
  }
};

struct SurveyRecord {
  std::string app_id;
  std::string reduction_id;
  std::string view_id;
  std::string user_id;
  RawRating rating{RawRating::kMin};
};

/// One (app, reduction, features, normalized score) row of historical data.
struct HistoryEntry {
  std::string app_id;
  std::string reduction_id;
  FeatureVector features;
  UserScore score;
};

struct HistoricalDataset {
  std::vector<HistoryEntry> entries;
};

// ---------------------------------------------------------------------------
// Operations

/// Maps an average rating in [1, 9] affinely onto [0, 1].
inline UserScore normalize_score(double rating) {
  if (!(rating >= RawRating::kMin && rating <= RawRating::kMax))
    fail(ErrorCode::kValidation, "rating must lie in [1, 9]", std::to_string(rating));
  return UserScore((rating - 1.0) / 8.0);
}

inline UserScore normalize_score(RawRating rating) {
  return normalize_score(static_cast<double>(rating.value()));
}

/// lambda * <alpha, w>
inline double savings_term(const ResourceSavings& w, const Specification& spec) {
  return spec.lambda() * (spec.alpha(Resource::kCpu) * w.cpu +
                          spec.alpha(Resource::kMem) * w.mem +
                          spec.alpha(Resource::kNet) * w.net);
}

/// Resource-aware user experience J(r; lambda, alpha).
inline double objective(UserScore u, const ResourceSavings& w,
                        const Specification& spec) {
  return u.value() + savings_term(w, spec);
}

/// Objective of the unmodified app: u = 1 and no savings.
inline double original_objective(const Specification& spec) {
  return objective(UserScore(1.0), kOriginalSavings, spec);
}

/**
 * Index of the best element of [0, n) under `key`, where higher keys win and
 * equal keys fall back to the lexicographically smallest id. `key` may return
 * any totally ordered type (a double, or a tuple for layered tie-breaks).
 */
template <typename IdFn, typename KeyFn>
std::size_t best_index(std::size_t n, IdFn&& id, KeyFn&& key) {
  if (n == 0) fail(ErrorCode::kValidation, "no candidates to choose from");
  std::size_t best = 0;
  auto best_key = key(std::size_t{0});
  for (std::size_t i = 1; i < n; ++i) {
    auto k = key(i);
    if (k > best_key || (k == best_key && id(i) < id(best))) {
      best = i;
      best_key = std::move(k);
    }
  }
  return best;
}

struct ScoredReduction {
  std::reference_wrapper<const Reduction> reduction;
  UserScore score;
};

/// Returns the candidate maximizing J; exact ties go to the smallest id.
inline const Reduction& argmax_objective(std::span<const ScoredReduction> candidates,
                                         const Specification& spec) {
  const auto i = best_index(
      candidates.size(),
      [&](std::size_t k) -> const std::string& { return candidates[k].reduction.get().id; },
      [&](std::size_t k) {
        return objective(candidates[k].score, candidates[k].reduction.get().savings, spec);
      });
  return candidates[i].reduction.get();
}

/// Denominators smaller than this make rho undefined.
inline constexpr double kDegenerateGap = 1e-12;

/**
 * rho = (J(r) - J(a)) / (J(r*) - J(a)). 0 for the original app, 1 for the
 * optimum, possibly negative. Empty when the optimum does not beat the
 * original app by more than kDegenerateGap.
 */
inline std::optional<double> normalized_objective(double value, double original_value,
                                                  double optimal_value) {
  const double gap = optimal_value - original_value;
  if (std::abs(gap) < kDegenerateGap) return std::nullopt;
  return (value - original_value) / gap;
}

enum class ViewAggregation { kMean, kSumClamped };

/// Combines per-view scores into one reduction score.
inline UserScore aggregate_views(std::span<const UserScore> per_view,
                                 ViewAggregation mode = ViewAggregation::kMean) {
  if (per_view.empty()) fail(ErrorCode::kValidation, "no view scores to aggregate");
  double sum = 0.0;
  for (const auto s : per_view) sum += s.value();
  if (mode == ViewAggregation::kSumClamped) return UserScore(std::min(1.0, sum));
  return UserScore::clamped(sum / static_cast<double>(per_view.size()));
}

}  // namespace redopt

#endif  // REDOPT_DOMAIN_HPP
