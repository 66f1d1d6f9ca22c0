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

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "redopt/bandit.hpp"
#include "redopt/io.hpp"
#include "redopt/oracles.hpp"
#include "support.hpp"

namespace redopt {
namespace {

/// Prior concentrated on theta so tightly that sampling returns the mean.
PriorParams point_mass(const WeightVector& theta) {
  return PriorParams{theta, Eigen::VectorXd::Constant(theta.size(), 1e-8), 0.1, 1.0};
}

WeightVector random_theta(Rng& rng) {
  std::uniform_real_distribution<double> unit(-0.3, 0.3);
  WeightVector w = WeightVector::NullaryExpr(16, [&] { return unit(rng); });
  w[15] = 0.6;
  return w;
}

std::vector<double> clamped_predictions(const App& app, const WeightVector& theta) {
  std::vector<double> u;
  for (const auto& r : app.reductions) u.push_back(predict_score(theta, r.features).value());
  return u;
}

TEST(ThompsonSelect, ZeroVarianceIsExactArgmax) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const App app = testing::random_app(rng, 2 + trial % 12);
    const auto spec = testing::random_spec(rng);
    const auto theta = random_theta(rng);
    Rng draw(trial);
    const auto& chosen = thompson_select(spec, app.reductions, {}, point_mass(theta), draw);
    EXPECT_EQ(chosen.id, testing::brute_force_argmax(app, clamped_predictions(app, theta), spec));
  }
}

TEST(ThompsonSelect, SingleCandidate) {
  Rng rng(2);
  const App app = testing::random_app(rng, 1);
  Rng draw(9);
  EXPECT_EQ(thompson_select(Specification(), app.reductions, {}, flat_prior(16, 0.1, 20), draw).id,
            app.reductions[0].id);
  EXPECT_THROW(thompson_select(Specification(), {}, {}, flat_prior(16, 0.1), draw), Error);
}

TEST(ThompsonSelect, SymmetricPairIsAFairCoin) {
  // Two reductions that differ only in which feature is active, with an
  // exchangeable prior, must each be drawn half of the time.
  App app;
  for (const auto* id : {"zeta", "alpha"}) {
    Reduction r;
    r.id = id;
    r.views = {"v"};
    r.features = FeatureVector::Zero(16);
    r.features[id[0] == 'z' ? 0 : 1] = 1.0;
    r.features[15] = 1.0;
    r.savings = {0.0, 0.2, 0.4};
    app.reductions.push_back(r);
  }
  PriorParams prior = flat_prior(16, 0.1, 1.0);
  prior.mean[15] = 0.5;
  Rng rng(31);
  int zeta = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i)
    zeta += thompson_select(Specification(1.0, {0, 0, 1}), app.reductions, {}, prior, rng).id ==
            "zeta";
  EXPECT_NEAR(static_cast<double>(zeta) / n, 0.5, 0.03);
}

TEST(OptimizeReduction, FullyQueriedUsesObservedScores) {
  Rng rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const App app = testing::random_app(rng, 1 + trial % 10);
    const auto spec = testing::random_spec(rng);
    std::vector<QueryRecord> data;
    std::vector<double> u;
    std::vector<ScoredReduction> scored;
    for (const auto& r : app.reductions) {
      u.push_back(unit(rng));
      data.push_back({r.id, r.features, UserScore(u.back())});
      scored.push_back({r, UserScore(u.back())});
    }
    const auto& rec = optimize_reduction(spec, app.reductions, data, flat_prior(16, 0.1, 20));
    EXPECT_EQ(rec.id, argmax_objective(scored, spec).id);
    EXPECT_EQ(rec.id, testing::brute_force_argmax(app, u, spec));
  }
}

TEST(OptimizeReduction, NoQueriesPointMassPrior) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const App app = testing::random_app(rng, 1 + trial % 10);
    const auto spec = testing::random_spec(rng);
    const auto theta = random_theta(rng);
    EXPECT_EQ(optimize_reduction(spec, app.reductions, {}, point_mass(theta)).id,
              testing::brute_force_argmax(app, clamped_predictions(app, theta), spec));
  }
}

TEST(OptimizeReduction, NewsFixtureFullyQueried) {
  const auto ds = load_dataset(testing::data_path("news_fixture.json"));
  const auto& app = ds.apps.at(0);
  const ReplayOracle replay(ds.surveys, ds.apps);
  std::vector<QueryRecord> data;
  for (const auto& r : app.reductions) data.push_back({r.id, r.features, replay(r)});
  EXPECT_EQ(optimize_reduction(Specification(0.5, {0, 0.5, 0.5}), app.reductions, data,
                               flat_prior(16, 0.1, 20))
                .id,
            "high_quality");
}

class RunSessionTest : public ::testing::Test {
 protected:
  static UserScore truth_of(const App& app, const WeightVector& theta, const Reduction& r) {
    (void)app;
    return predict_score(theta, r.features);
  }
};

TEST_F(RunSessionTest, FullBudgetRecoversBruteForceOptimum) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const App app = testing::random_app(rng, 1 + trial % 15);
    const auto spec = testing::random_spec(rng);
    const auto theta = random_theta(rng);
    const Oracle oracle = [&](const Reduction& r) { return predict_score(theta, r.features); };
    Rng session(trial);
    const auto trace = run_session(app, spec, static_cast<int>(app.reductions.size()),
                                   flat_prior(16, 0.1, 20), oracle, session);
    const auto u = clamped_predictions(app, theta);
    EXPECT_EQ(*trace.recommendation, testing::brute_force_argmax(app, u, spec));
    std::vector<UserScore> truth;
    for (const double x : u) truth.push_back(UserScore(x));
    const auto rho = rho_for(app, spec, truth, *trace.recommendation);
    if (rho) {
      EXPECT_DOUBLE_EQ(*rho, 1.0);
    }
  }
}

TEST_F(RunSessionTest, BudgetZeroMakesNoCalls) {
  Rng rng(6);
  const App app = testing::random_app(rng, 6);
  int calls = 0;
  const Oracle oracle = [&](const Reduction&) {
    ++calls;
    return UserScore(0.5);
  };
  const auto prior = flat_prior(16, 0.1, 20);
  Rng session(1);
  const auto trace = run_session(app, Specification(), 0, prior, oracle, session);
  EXPECT_EQ(calls, 0);
  EXPECT_TRUE(trace.steps.empty());
  EXPECT_EQ(*trace.recommendation, optimize_reduction(Specification(), app.reductions, {}, prior).id);
  for (const auto& e : trace.estimates) EXPECT_FALSE(e.observed);
}

TEST_F(RunSessionTest, OversizedBudgetIsClampedWithWarning) {
  Rng rng(7);
  const App app = testing::random_app(rng, 4);
  int calls = 0;
  const Oracle oracle = [&](const Reduction&) {
    ++calls;
    return UserScore(0.5);
  };
  Rng session(2);
  const auto trace = run_session(app, Specification(), 9, flat_prior(16, 0.1, 20), oracle, session);
  EXPECT_EQ(calls, 4);
  ASSERT_EQ(trace.warnings.size(), 1u);
  EXPECT_NE(trace.warnings[0].find("clamped"), std::string::npos);
}

TEST_F(RunSessionTest, CallCountAndNoRepeats) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const App app = testing::random_app(rng, 1 + trial % 9);
    const int budget = trial % 12;
    std::multiset<std::string> asked;
    const Oracle oracle = [&](const Reduction& r) {
      asked.insert(r.id);
      return UserScore(0.3);
    };
    Rng session(trial);
    const auto trace =
        run_session(app, testing::random_spec(rng), budget, flat_prior(16, 0.2, 20), oracle, session);
    const auto expected = std::min<std::size_t>(static_cast<std::size_t>(budget), app.reductions.size());
    EXPECT_EQ(asked.size(), expected);
    EXPECT_EQ(trace.steps.size(), expected);
    for (const auto& id : asked) EXPECT_EQ(asked.count(id), 1u);
  }
}

TEST_F(RunSessionTest, DeterministicGivenSeed) {
  Rng rng(9);
  const App app = testing::random_app(rng, 8);
  const auto theta = random_theta(rng);
  const Oracle oracle = [&](const Reduction& r) { return predict_score(theta, r.features); };
  const auto spec = testing::random_spec(rng);
  Rng a(55), b(55);
  const auto ta = run_session(app, spec, 3, flat_prior(16, 0.1, 20), oracle, a);
  const auto tb = run_session(app, spec, 3, flat_prior(16, 0.1, 20), oracle, b);
  EXPECT_EQ(trace_to_json(ta), trace_to_json(tb));
}

TEST_F(RunSessionTest, OracleFailureAbortsWithPartialTrace) {
  Rng rng(10);
  const App app = testing::random_app(rng, 5);
  int calls = 0;
  const Oracle oracle = [&](const Reduction&) -> UserScore {
    if (++calls == 3) fail(ErrorCode::kGone, "user left");
    return UserScore(0.4);
  };
  Rng session(3);
  const auto trace = run_session(app, Specification(), 5, flat_prior(16, 0.1, 20), oracle, session);
  EXPECT_TRUE(trace.aborted);
  EXPECT_EQ(trace.steps.size(), 2u);
  EXPECT_FALSE(trace.recommendation.has_value());
  EXPECT_EQ(trace.abort_reason, "user left");
}

TEST_F(RunSessionTest, RejectsBadInput) {
  Rng rng(11);
  const App app = testing::random_app(rng, 3);
  const Oracle oracle = [](const Reduction&) { return UserScore(0.5); };
  Rng session(1);
  EXPECT_THROW(run_session(app, Specification(), -1, flat_prior(16, 0.1), oracle, session), Error);
  EXPECT_THROW(run_session(App{"empty", "", {}}, Specification(), 1, flat_prior(16, 0.1), oracle, session),
               Error);
}

TEST(RhoFor, NewsFixtureMediumUnderLowEndSpec) {
  const auto ds = load_dataset(testing::data_path("news_fixture.json"));
  const auto& app = ds.apps.at(0);
  const ReplayOracle replay(ds.surveys, ds.apps);
  std::vector<UserScore> truth;
  for (const auto& r : app.reductions) truth.push_back(replay(r));
  const Specification spec(0.5, {0, 0.5, 0.5});
  EXPECT_NEAR(*rho_for(app, spec, truth, "medium_quality"), (0.738 - 1.0) / 0.00075, 1e-6);
  EXPECT_DOUBLE_EQ(*rho_for(app, spec, truth, "high_quality"), 1.0);
  EXPECT_THROW(rho_for(app, spec, truth, "original"), Error);
}

}  // namespace
}  // namespace redopt
