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
 * @file oracles.hpp
 *
 * Three interchangeable answers to "how good is reduction r?": recorded
 * survey ratings (ReplayOracle), a known linear ground truth plus Gaussian
 * noise (SyntheticOracle), and a live person rating through the session
 * service (InteractiveOracle).
 */

#ifndef REDOPT_ORACLES_HPP
#define REDOPT_ORACLES_HPP

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redopt/ard.hpp"
#include "redopt/domain.hpp"
#include "redopt/error.hpp"
#include "redopt/random.hpp"

namespace redopt {

// ---------------------------------------------------------------------------
// Replay

/**
 * Score of one reduction from recorded surveys: ratings are averaged over
 * users per view, each view mean is normalized, and the normalized view
 * scores are aggregated.
 */
inline UserScore replay_score(std::span<const SurveyRecord> surveys, std::string_view app_id,
                              std::string_view reduction_id,
                              ViewAggregation mode = ViewAggregation::kMean) {
  std::map<std::string, std::pair<double, int>> per_view;
  for (const auto& s : surveys) {
    if (s.app_id != app_id || s.reduction_id != reduction_id) continue;
    auto& [sum, count] = per_view[s.view_id];
    sum += s.rating.value();
    ++count;
  }
  if (per_view.empty())
    fail(ErrorCode::kNotFound, "no survey records for reduction",
         std::string(app_id) + "/" + std::string(reduction_id));
  std::vector<UserScore> views;
  views.reserve(per_view.size());
  for (const auto& [view, acc] : per_view)
    views.push_back(normalize_score(acc.first / acc.second));
  return aggregate_views(views, mode);
}

/// Answers queries from survey records; every score is computed up front.
class ReplayOracle {
 public:
  ReplayOracle(std::span<const SurveyRecord> surveys, std::span<const App> apps,
               ViewAggregation mode = ViewAggregation::kMean) {
    for (const auto& app : apps)
      for (const auto& r : app.reductions) {
        bool covered = false;
        for (const auto& s : surveys)
          if (s.app_id == app.id && s.reduction_id == r.id) {
            covered = true;
            break;
          }
        if (covered) scores_.emplace(key(app.id, r.id), replay_score(surveys, app.id, r.id, mode));
      }
  }

  bool covers(const App& app) const {
    for (const auto& r : app.reductions)
      if (!scores_.contains(key(app.id, r.id))) return false;
    return true;
  }

  /// First reduction of the app without survey coverage, if any.
  std::optional<std::string> first_uncovered(const App& app) const {
    for (const auto& r : app.reductions)
      if (!scores_.contains(key(app.id, r.id))) return r.id;
    return std::nullopt;
  }

  UserScore score(std::string_view app_id, std::string_view reduction_id) const {
    const auto it = scores_.find(key(app_id, reduction_id));
    if (it == scores_.end())
      fail(ErrorCode::kNotFound, "no survey records for reduction",
           std::string(app_id) + "/" + std::string(reduction_id));
    return it->second;
  }

  UserScore operator()(const Reduction& r) const { return score(r.app_id, r.id); }

 private:
  static std::string key(std::string_view app, std::string_view reduction) {
    std::string k(app);
    k += '\x1f';
    k += reduction;
    return k;
  }

  std::map<std::string, UserScore> scores_;
};

// ---------------------------------------------------------------------------
// Synthetic

/// <theta*, phi> + N(0, noise_sd^2), clamped into [0, 1].
inline UserScore synthetic_query(const WeightVector& true_weights, const FeatureVector& features,
                                 double noise_sd, Rng& rng) {
  if (!(noise_sd >= 0.0)) fail(ErrorCode::kValidation, "noise_sd must be nonnegative");
  double value = predict_raw(true_weights, features);
  if (noise_sd > 0.0) value += std::normal_distribution<double>(0.0, noise_sd)(rng);
  return UserScore::clamped(value);
}

class SyntheticOracle {
 public:
  SyntheticOracle(WeightVector true_weights, double noise_sd, std::uint64_t seed)
      : weights_(std::move(true_weights)), noise_sd_(noise_sd), rng_(seed) {
    if (!(noise_sd_ >= 0.0)) fail(ErrorCode::kValidation, "noise_sd must be nonnegative");
  }

  UserScore operator()(const Reduction& r) { return synthetic_query(weights_, r.features, noise_sd_, rng_); }

  /// Noise-free score, the ground truth the oracle is drawn around.
  UserScore expected(const Reduction& r) const { return predict_score(weights_, r.features); }

 private:
  WeightVector weights_;
  double noise_sd_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Interactive

/// What the rating UI shows for the query currently awaiting an answer.
struct PendingQuery {
  int sequence = 0;  // 1-based query number within the session
  std::string reduction_id;
  ReductionKind kind = ReductionKind::kImageRemoval;
  std::string summary;
  std::vector<std::string> views;
  std::vector<std::string> asset_refs;
};

/**
 * Rendezvous between a session's selection loop and the person answering.
 * The loop calls ask(), which publishes a pending query and blocks until
 * submit() delivers a rating, the timeout expires, or close() is called.
 * At most one query is pending at a time.
 */
class InteractiveOracle {
 public:
  using Clock = std::chrono::steady_clock;

  explicit InteractiveOracle(std::chrono::milliseconds timeout = std::chrono::minutes(15))
      : timeout_(timeout) {}

  InteractiveOracle(const InteractiveOracle&) = delete;
  InteractiveOracle& operator=(const InteractiveOracle&) = delete;

  UserScore ask(const Reduction& r) {
    std::unique_lock lock(mutex_);
    if (closed_) fail(ErrorCode::kGone, "session is closed", close_reason_);
    PendingQuery q;
    q.sequence = ++asked_;
    q.reduction_id = r.id;
    q.kind = r.kind;
    q.summary = std::string(describe(r.kind)) + " on " + std::to_string(r.views.size()) +
                (r.views.size() == 1 ? " screen" : " screens");
    q.views = r.views;
    q.asset_refs = r.asset_refs;
    pending_ = std::move(q);
    answer_.reset();
    cv_.notify_all();

    const bool answered = cv_.wait_for(lock, timeout_, [&] { return answer_ || closed_; });
    if (answer_) {
      const RawRating rating = *answer_;
      answer_.reset();
      return normalize_score(rating);
    }
    pending_.reset();
    if (!answered) {
      closed_ = true;
      close_reason_ = "timed out waiting for a rating";
      cv_.notify_all();
      fail(ErrorCode::kGone, "session timed out", close_reason_);
    }
    fail(ErrorCode::kGone, "session is closed", close_reason_);
  }

  /// Delivers a rating for the pending query. An out-of-range rating or a
  /// reduction id that does not match the pending query leaves it pending.
  void submit(std::string_view reduction_id, int rating) {
    const RawRating validated(rating);
    std::lock_guard lock(mutex_);
    if (closed_) fail(ErrorCode::kGone, "session is closed", close_reason_);
    if (!pending_) fail(ErrorCode::kConflict, "no query is awaiting a rating");
    if (pending_->reduction_id != reduction_id)
      fail(ErrorCode::kConflict, "rating does not match the pending query",
           "pending " + pending_->reduction_id + ", got " + std::string(reduction_id));
    pending_.reset();
    answer_ = validated;
    cv_.notify_all();
  }

  std::optional<PendingQuery> pending() const {
    std::lock_guard lock(mutex_);
    return pending_;
  }

  /// Blocks until a query is pending, the oracle is closed, or the deadline
  /// passes. Returns the pending query if there is one.
  std::optional<PendingQuery> wait_pending(Clock::time_point deadline) const {
    std::unique_lock lock(mutex_);
    cv_.wait_until(lock, deadline, [&] { return pending_.has_value() || closed_; });
    return pending_;
  }

  /// Wakes any waiter; subsequent ask() and submit() calls fail.
  void close(std::string reason) {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    close_reason_ = std::move(reason);
    pending_.reset();
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  int asked() const {
    std::lock_guard lock(mutex_);
    return asked_;
  }

 private:
  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::optional<PendingQuery> pending_;
  std::optional<RawRating> answer_;
  bool closed_ = false;
  std::string close_reason_;
  int asked_ = 0;
};

}  // namespace redopt

#endif  // REDOPT_ORACLES_HPP
