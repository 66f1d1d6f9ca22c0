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
 * @file bandit.hpp
 *
 * Budgeted active selection of a reduction. Each round draws a weight vector
 * from the current posterior, queries the reduction that is best under the
 * draw, and removes it from the candidate set. Once the budget is spent the
 * posterior mode predicts every unqueried reduction, observed scores stand in
 * for queried ones, and the best reduction under J is returned.
 *
 * B = 0 selects from the historical prior alone; B = |R(a)| queries every
 * reduction and reduces to an exact argmax over observed scores.
 */

#ifndef REDOPT_BANDIT_HPP
#define REDOPT_BANDIT_HPP

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "redopt/ard.hpp"
#include "redopt/domain.hpp"
#include "redopt/error.hpp"
#include "redopt/random.hpp"

namespace redopt {

/// One answered query. Features are carried along so the posterior can be
/// rebuilt without the app at hand.
struct QueryRecord {
  std::string reduction_id;
  FeatureVector features;
  UserScore score;
};

/// The user-experience query O(r).
using Oracle = std::function<UserScore(const Reduction&)>;

struct TraceStep {
  std::string reduction_id;
  UserScore score;
  /// J of the queried reduction under the Thompson draw that selected it.
  double sampled_objective = 0.0;
  /// J of the queried reduction under the posterior mode before the query.
  double estimated_objective = 0.0;
};

/// Final per-reduction estimate u-hat used by the last argmax.
struct ScoreEstimate {
  std::string reduction_id;
  UserScore score;
  bool observed = false;
};

struct SessionTrace {
  Specification spec;
  int budget = 0;
  std::vector<TraceStep> steps;
  std::optional<std::string> recommendation;
  std::vector<ScoreEstimate> estimates;
  std::optional<double> rho;
  std::vector<std::string> warnings;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline std::vector<Observation> to_observations(std::span<const QueryRecord> data) {
  std::vector<Observation> out;
  out.reserve(data.size());
  for (const auto& q : data) out.push_back({q.features, q.score});
  return out;
}

/// Ranking key: J with the clamped prediction, then J with the raw linear
/// prediction so that candidates clamped to the same score stay ordered.
inline std::tuple<double, double> ranking_key(const WeightVector& weights,
                                              const Reduction& r,
                                              const Specification& spec) {
  const double raw = predict_raw(weights, r.features);
  const double bonus = savings_term(r.savings, spec);
  return {UserScore::clamped(raw).value() + bonus, raw + bonus};
}

}  // namespace detail

struct ThompsonChoice {
  std::size_t index = 0;
  double sampled_objective = 0.0;
};

/// Thompson step over the unqueried set; returns the chosen position.
inline ThompsonChoice thompson_choose(const Specification& spec,
                                      std::span<const Reduction> unqueried,
                                      std::span<const QueryRecord> data,
                                      const PriorParams& prior, Rng& rng) {
  if (unqueried.empty()) fail(ErrorCode::kValidation, "no unqueried reductions left");
  const auto observations = detail::to_observations(data);
  const Posterior posterior = posterior_update(prior, observations);
  const WeightVector draw = sample_weights(posterior, rng);
  const auto i = best_index(
      unqueried.size(), [&](std::size_t k) -> const std::string& { return unqueried[k].id; },
      [&](std::size_t k) { return detail::ranking_key(draw, unqueried[k], spec); });
  return {i, std::get<0>(detail::ranking_key(draw, unqueried[i], spec))};
}

inline const Reduction& thompson_select(const Specification& spec,
                                        std::span<const Reduction> unqueried,
                                        std::span<const QueryRecord> data,
                                        const PriorParams& prior, Rng& rng) {
  return unqueried[thompson_choose(spec, unqueried, data, prior, rng).index];
}

/// u-hat for every reduction: observed when queried, posterior-mode prediction
/// otherwise.
inline std::vector<ScoreEstimate> estimate_scores(std::span<const Reduction> reductions,
                                                  std::span<const QueryRecord> data,
                                                  const PriorParams& prior) {
  const auto observations = detail::to_observations(data);
  const WeightVector mode = map_estimate(posterior_update(prior, observations));
  std::vector<ScoreEstimate> out;
  out.reserve(reductions.size());
  for (const auto& r : reductions) {
    const auto it = std::find_if(data.begin(), data.end(),
                                 [&](const QueryRecord& q) { return q.reduction_id == r.id; });
    if (it != data.end())
      out.push_back({r.id, it->score, true});
    else
      out.push_back({r.id, predict_score(mode, r.features), false});
  }
  return out;
}

/// Final selection over all reductions of the app.
inline const Reduction& optimize_reduction(const Specification& spec,
                                           std::span<const Reduction> reductions,
                                           std::span<const QueryRecord> data,
                                           const PriorParams& prior) {
  if (reductions.empty()) fail(ErrorCode::kValidation, "app has no reductions");
  const auto observations = detail::to_observations(data);
  const WeightVector mode = map_estimate(posterior_update(prior, observations));
  const auto key = [&](std::size_t k) {
    const Reduction& r = reductions[k];
    const auto it = std::find_if(data.begin(), data.end(),
                                 [&](const QueryRecord& q) { return q.reduction_id == r.id; });
    if (it != data.end()) {
      const double j = objective(it->score, r.savings, spec);
      return std::tuple<double, double>{j, j};
    }
    return detail::ranking_key(mode, r, spec);
  };
  const auto i = best_index(
      reductions.size(), [&](std::size_t k) -> const std::string& { return reductions[k].id; },
      key);
  return reductions[i];
}

/**
 * Runs the full query loop on one app. Performs exactly min(budget, |R(a)|)
 * oracle calls. An oracle that throws aborts the session; the trace keeps
 * every step completed before the failure and has no recommendation.
 */
inline SessionTrace run_session(const App& app, const Specification& spec, int budget,
                                const PriorParams& prior, const Oracle& oracle, Rng& rng) {
  if (budget < 0) fail(ErrorCode::kValidation, "budget must be nonnegative");
  if (app.reductions.empty()) fail(ErrorCode::kValidation, "app has no reductions", app.id);
  prior.validate();

  SessionTrace trace;
  trace.spec = spec;
  trace.budget = budget;

  const auto total = static_cast<int>(app.reductions.size());
  int rounds = budget;
  if (budget > total) {
    rounds = total;
    trace.warnings.push_back("budget " + std::to_string(budget) +
                             " exceeds the number of reductions; clamped to " +
                             std::to_string(total));
  }

  std::vector<Reduction> unqueried = app.reductions;
  std::vector<QueryRecord> data;
  data.reserve(static_cast<std::size_t>(rounds));

  for (int round = 0; round < rounds; ++round) {
    const ThompsonChoice choice = thompson_choose(spec, unqueried, data, prior, rng);
    const Reduction chosen = unqueried[choice.index];
    const auto mode = map_estimate(posterior_update(prior, detail::to_observations(data)));
    const double estimated =
        objective(predict_score(mode, chosen.features), chosen.savings, spec);

    UserScore answer;
    try {
      answer = oracle(chosen);
    } catch (const std::exception& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      return trace;
    }
    unqueried.erase(unqueried.begin() + static_cast<std::ptrdiff_t>(choice.index));
    data.push_back({chosen.id, chosen.features, answer});
    trace.steps.push_back({chosen.id, answer, choice.sampled_objective, estimated});
  }

  trace.recommendation = optimize_reduction(spec, app.reductions, data, prior).id;
  trace.estimates = estimate_scores(app.reductions, data, prior);
  return trace;
}

/// Best true objective over the app's reductions.
inline double optimal_objective(const App& app, const Specification& spec,
                                std::span<const UserScore> true_scores) {
  if (true_scores.size() != app.reductions.size())
    fail(ErrorCode::kDimension, "need one true score per reduction");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < app.reductions.size(); ++i)
    best = std::max(best, objective(true_scores[i], app.reductions[i].savings, spec));
  return best;
}

/**
 * rho of `chosen` given ground-truth scores for every reduction of the app.
 * The original app (u = 1, no savings) is the reference point. Empty when no
 * reduction beats the original app, since the scale then has no positive
 * range to normalize by.
 */
inline std::optional<double> rho_for(const App& app, const Specification& spec,
                                     std::span<const UserScore> true_scores,
                                     std::string_view chosen) {
  const double best = optimal_objective(app, spec, true_scores);
  const auto* r = app.find(chosen);
  if (!r) fail(ErrorCode::kNotFound, "recommendation is not a reduction of the app",
               std::string(chosen));
  const double original = original_objective(spec);
  if (best <= original) return std::nullopt;
  const auto idx = static_cast<std::size_t>(r - app.reductions.data());
  return normalized_objective(objective(true_scores[idx], r->savings, spec), original, best);
}

}  // namespace redopt

#endif  // REDOPT_BANDIT_HPP
