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
 * @file harness.hpp
 *
 * Leave-one-out evaluation: for every test app the prior is fitted on all
 * other apps, then each (specification, budget, run) cell runs a session
 * against the replay oracle and records the normalized objective rho of the
 * recommendation. Cells are independent and seeded by a hash chain over
 * (seed, app, spec, budget, run), so any subset reproduces bit-for-bit.
 */

#ifndef REDOPT_HARNESS_HPP
#define REDOPT_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "redopt/ard.hpp"
#include "redopt/bandit.hpp"
#include "redopt/domain.hpp"
#include "redopt/io.hpp"
#include "redopt/oracles.hpp"
#include "redopt/random.hpp"

namespace redopt {

/// Budget placeholder meaning "every reduction of the app".
inline constexpr int kFullBudget = -1;

enum class PriorMode { kInformative, kFlat };

struct ExperimentConfig {
  std::vector<double> lambdas = {1.0, 3.0};
  std::vector<std::array<double, kResourceCount>> alphas = {
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  std::vector<int> budgets = {0, 1, 2, 3, 4, kFullBudget};
  int runs = 25;
  std::uint64_t seed = 0;
  /// Empty means every app is a test app.
  std::vector<std::string> test_apps;
  double scale = 20.0;
  PriorMode prior = PriorMode::kInformative;
  /// When set, rho is computed under this specification instead of the one
  /// the session optimized for.
  std::optional<Specification> evaluate_under;
  bool timing = false;
  unsigned threads = 1;

  std::vector<Specification> specs() const {
    std::vector<Specification> out;
    for (const double l : lambdas)
      for (const auto& a : alphas) out.emplace_back(l, a);
    return out;
  }

  void validate() const {
    if (runs < 1) fail(ErrorCode::kValidation, "runs must be at least 1");
    if (budgets.empty()) fail(ErrorCode::kValidation, "no budgets configured");
    for (const int b : budgets)
      if (b < 0 && b != kFullBudget) fail(ErrorCode::kValidation, "budgets must be nonnegative");
    if (lambdas.empty() || alphas.empty())
      fail(ErrorCode::kValidation, "specification grid is empty");
    if (!(scale > 0.0)) fail(ErrorCode::kValidation, "scale must be positive");
    (void)specs();  // validates every (lambda, alpha) pair
  }
};

/// Parses an experiment configuration; absent fields keep their defaults.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  const detail::Reader root(doc, "");
  ExperimentConfig c;
  if (root.has("lambdas")) c.lambdas = root.at("lambdas").numbers();
  if (root.has("alphas")) {
    c.alphas.clear();
    for (const auto& a : root.at("alphas").items()) {
      const auto v = a.numbers();
      if (v.size() != kResourceCount)
        fail(ErrorCode::kParse, "alpha must have 3 components (cpu, mem, net)", a.pointer());
      c.alphas.push_back({v[0], v[1], v[2]});
    }
  }
  if (root.has("budgets")) {
    c.budgets.clear();
    for (const auto& b : root.at("budgets").items()) {
      if (b.node().is_string() && b.str() == "all")
        c.budgets.push_back(kFullBudget);
      else
        c.budgets.push_back(b.integer());
    }
  }
  if (root.has("runs")) c.runs = root.at("runs").integer();
  if (root.has("seed")) c.seed = root.at("seed").node().get<std::uint64_t>();
  if (root.has("test_apps")) c.test_apps = root.at("test_apps").strings();
  if (root.has("scale")) c.scale = root.at("scale").num();
  if (root.has("prior")) {
    const auto p = root.at("prior").str();
    if (p == "informative")
      c.prior = PriorMode::kInformative;
    else if (p == "flat")
      c.prior = PriorMode::kFlat;
    else
      fail(ErrorCode::kParse, "prior must be 'informative' or 'flat'", "/prior");
  }
  if (root.has("evaluate_under")) c.evaluate_under = spec_from_json(root.at("evaluate_under").node());
  if (root.has("timing")) c.timing = root.at("timing").node().get<bool>();
  if (root.has("threads")) c.threads = static_cast<unsigned>(root.at("threads").integer());
  detail::located("config", [&] {
    c.validate();
    return 0;
  });
  return c;
}

/// Replay-scored history from every covered reduction of apps other than
/// `exclude_app`.
inline HistoricalDataset history_without(const DatasetFile& ds, const ReplayOracle& replay,
                                         std::string_view exclude_app) {
  HistoricalDataset h;
  for (const auto& app : ds.apps) {
    if (app.id == exclude_app) continue;
    for (const auto& r : app.reductions) {
      if (!replay.covers(App{app.id, {}, {r}})) continue;
      h.entries.push_back({app.id, r.id, r.features, replay(r)});
    }
  }
  return h;
}

/// Prior used for one test app under the configured mode.
inline PriorParams prior_for_test_app(const DatasetFile& ds, const ReplayOracle& replay,
                                      std::string_view test_app, const ExperimentConfig& config) {
  const auto history = history_without(ds, replay, test_app);
  ArdOptions opts;
  opts.scale = config.scale;
  PriorParams fitted = fit_prior(history, opts);
  if (config.prior == PriorMode::kFlat)
    return flat_prior(fitted.dim(), fitted.noise_sd, config.scale);
  return fitted;
}

namespace detail {

inline std::vector<const App*> select_test_apps(const DatasetFile& ds,
                                                const ExperimentConfig& config,
                                                const ReplayOracle& replay) {
  if (ds.apps.size() < 2)
    fail(ErrorCode::kValidation, "leave-one-out evaluation needs at least 2 apps",
         std::to_string(ds.apps.size()) + " given");
  std::vector<const App*> out;
  if (config.test_apps.empty()) {
    for (const auto& a : ds.apps) out.push_back(&a);
  } else {
    for (const auto& id : config.test_apps) out.push_back(&ds.app(id));
  }
  for (const auto* app : out) {
    if (app->reductions.empty())
      fail(ErrorCode::kValidation, "test app has no reductions", app->id);
    if (const auto missing = replay.first_uncovered(*app))
      fail(ErrorCode::kIntegrity, "missing survey coverage", app->id + "/" + *missing);
  }
  return out;
}

inline std::vector<ResultRow> evaluate_app(const DatasetFile& ds, const ReplayOracle& replay,
                                           const App& app, const ExperimentConfig& config) {
  const PriorParams prior = prior_for_test_app(ds, replay, app.id, config);
  std::vector<UserScore> truth;
  for (const auto& r : app.reductions) truth.push_back(replay(r));
  const Oracle oracle = [&replay](const Reduction& r) { return replay(r); };

  std::vector<ResultRow> rows;
  for (const auto& spec : config.specs()) {
    const Specification& judged = config.evaluate_under ? *config.evaluate_under : spec;
    for (const int requested : config.budgets) {
      const int budget =
          requested == kFullBudget ? static_cast<int>(app.reductions.size()) : requested;
      for (int run = 0; run < config.runs; ++run) {
        Rng rng(derive_seed(config.seed, app.id, spec.lambda(), spec.alpha()[0],
                            spec.alpha()[1], spec.alpha()[2], budget, run));
        const auto start = std::chrono::steady_clock::now();
        const SessionTrace trace = run_session(app, spec, budget, prior, oracle, rng);
        const auto stop = std::chrono::steady_clock::now();

        ResultRow row;
        row.app_id = app.id;
        row.spec = spec;
        row.budget = budget;
        row.full_budget = requested == kFullBudget;
        row.run = run;
        row.recommendation = trace.recommendation.value_or("");
        row.queries = static_cast<int>(trace.steps.size());
        if (config.timing)
          row.ms = std::chrono::duration<double, std::milli>(stop - start).count();
        if (trace.recommendation) {
          row.rho = rho_for(app, judged, truth, *trace.recommendation);
          if (!row.rho) {
            const double gap = optimal_objective(app, judged, truth) - original_objective(judged);
            if (std::abs(gap) < kDegenerateGap) {
              // Every reduction at best ties the original app.
              row.flag = "degenerate";
              const auto& rec = app.at(*trace.recommendation);
              const std::size_t idx = static_cast<std::size_t>(&rec - app.reductions.data());
              if (objective(truth[idx], rec.savings, judged) == original_objective(judged))
                row.rho = 1.0;
            } else {
              row.flag = "no_gain";
            }
          }
        } else {
          row.flag = "aborted";
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace detail

/// Full leave-one-out sweep. Never mutates the dataset.
inline std::vector<ResultRow> leave_one_out_eval(const DatasetFile& ds,
                                                 const ExperimentConfig& config) {
  config.validate();
  const ReplayOracle replay(ds.surveys, ds.apps);
  const auto test_apps = detail::select_test_apps(ds, config, replay);

  std::vector<ResultRow> rows;
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads,
                                                           static_cast<unsigned>(test_apps.size())));
  if (threads == 1) {
    for (const auto* app : test_apps) {
      auto part = detail::evaluate_app(ds, replay, *app, config);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  } else {
    // Apps are dealt round-robin to workers; the final sort fixes the order.
    std::vector<std::future<std::vector<ResultRow>>> futures;
    for (unsigned t = 0; t < threads; ++t)
      futures.push_back(std::async(std::launch::async, [&, t] {
        std::vector<ResultRow> mine;
        for (std::size_t i = t; i < test_apps.size(); i += threads) {
          auto part = detail::evaluate_app(ds, replay, *test_apps[i], config);
          mine.insert(mine.end(), part.begin(), part.end());
        }
        return mine;
      }));
    for (auto& f : futures) {
      auto part = f.get();
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  sort_results(rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Accuracy

/// Fraction of positions where prediction and truth fall on the same side of
/// the threshold.
inline double binarized_accuracy(std::span<const UserScore> predicted,
                                 std::span<const UserScore> actual, double threshold = 0.5) {
  if (predicted.size() != actual.size())
    fail(ErrorCode::kDimension, "predicted and actual differ in length");
  if (predicted.empty()) fail(ErrorCode::kValidation, "no scores to compare");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    agree += (predicted[i].value() >= threshold) == (actual[i].value() >= threshold);
  return static_cast<double>(agree) / static_cast<double>(predicted.size());
}

struct AccuracyRow {
  std::string app_id;
  int budget = 0;
  bool full_budget = false;
  int run = 0;
  double accuracy = 0.0;
  /// Queried reductions are scored with their observed value and so are
  /// always classified correctly.
  int observed = 0;
  int total = 0;
};

/**
 * Accuracy of the final per-reduction estimates after B queries, measured on
 * all reductions of each test app (queried ones included, counted in
 * `observed`). Sessions use the first configured specification.
 */
inline std::vector<AccuracyRow> accuracy_sweep(const DatasetFile& ds,
                                               const ExperimentConfig& config,
                                               double threshold = 0.5) {
  config.validate();
  const ReplayOracle replay(ds.surveys, ds.apps);
  const auto test_apps = detail::select_test_apps(ds, config, replay);
  const Specification spec = config.specs().front();
  const Oracle oracle = [&replay](const Reduction& r) { return replay(r); };

  std::vector<AccuracyRow> rows;
  for (const auto* app : test_apps) {
    const PriorParams prior = prior_for_test_app(ds, replay, app->id, config);
    std::vector<UserScore> truth;
    for (const auto& r : app->reductions) truth.push_back(replay(r));
    for (const int requested : config.budgets) {
      const int budget =
          requested == kFullBudget ? static_cast<int>(app->reductions.size()) : requested;
      for (int run = 0; run < config.runs; ++run) {
        Rng rng(derive_seed(config.seed, "accuracy", app->id, budget, run));
        const auto trace = run_session(*app, spec, budget, prior, oracle, rng);
        std::vector<UserScore> predicted;
        int observed = 0;
        for (const auto& e : trace.estimates) {
          predicted.push_back(e.score);
          observed += e.observed;
        }
        rows.push_back({app->id, budget, requested == kFullBudget, run, binarized_accuracy(predicted, truth, threshold),
                        observed, static_cast<int>(predicted.size())});
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Curves

struct CurvePoint {
  int budget = 0;  // kFullBudget for the "query everything" point
  bool full() const noexcept { return budget == kFullBudget; }
  double mean = 0.0;
  std::optional<double> stderr_;  // across runs; empty with a single run
  int n = 0;                      // values averaged
};

namespace detail {

/// Group key: finite budgets in order, the full-budget point last.
inline int curve_key(int budget, bool full) {
  return full ? std::numeric_limits<int>::max() : budget;
}

/// Values per curve key, split by run.
using CurveGroups = std::map<int, std::map<int, std::vector<double>>>;

/// Mean over every value; standard error across per-run means, so a single
/// run leaves it undefined.
inline std::vector<CurvePoint> summarize(const CurveGroups& groups) {
  std::vector<CurvePoint> out;
  for (const auto& [key, by_run] : groups) {
    CurvePoint p;
    p.budget = key == std::numeric_limits<int>::max() ? kFullBudget : key;
    double sum = 0.0;
    std::vector<double> run_means;
    for (const auto& [run, values] : by_run) {
      if (values.empty()) continue;
      double run_sum = 0.0;
      for (const double v : values) run_sum += v;
      sum += run_sum;
      p.n += static_cast<int>(values.size());
      run_means.push_back(run_sum / static_cast<double>(values.size()));
    }
    if (p.n == 0) {
      p.mean = std::nan("");
      out.push_back(p);
      continue;
    }
    p.mean = sum / p.n;
    const auto k = static_cast<double>(run_means.size());
    if (run_means.size() > 1) {
      double m = 0.0;
      for (const double v : run_means) m += v;
      m /= k;
      double ss = 0.0;
      for (const double v : run_means) ss += (v - m) * (v - m);
      p.stderr_ = std::sqrt(ss / (k - 1)) / std::sqrt(k);
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

/// Per-budget mean and standard error of rho. Rows with undefined rho are
/// left out.
inline std::vector<CurvePoint> rho_curve(std::span<const ResultRow> rows) {
  detail::CurveGroups groups;
  for (const auto& r : rows) {
    if (!(r.spec == rows.front().spec))
      fail(ErrorCode::kValidation, "rho_curve rows must share one specification");
    auto& g = groups[detail::curve_key(r.budget, r.full_budget)][r.run];
    if (r.rho) g.push_back(*r.rho);
  }
  return detail::summarize(groups);
}

inline std::vector<CurvePoint> accuracy_curve(std::span<const AccuracyRow> rows) {
  detail::CurveGroups groups;
  for (const auto& r : rows)
    groups[detail::curve_key(r.budget, r.full_budget)][r.run].push_back(r.accuracy);
  return detail::summarize(groups);
}

/// True when each mean is at least the previous one minus `tolerance`.
inline bool is_non_decreasing(std::span<const CurvePoint> curve, double tolerance) {
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].mean < curve[i - 1].mean - tolerance) return false;
  return true;
}

inline std::string curve_csv(std::span<const CurvePoint> curve) {
  std::string out = "budget,mean_rho,stderr,n\n";
  for (const auto& p : curve)
    out += (p.full() ? std::string("all") : std::to_string(p.budget)) + ',' + format_number(p.mean) + ',' +
           (p.stderr_ ? format_number(*p.stderr_) : std::string()) + ',' +
           std::to_string(p.n) + '\n';
  return out;
}

/// Static SVG line plot of a curve, with one-stderr whiskers.
inline std::string curve_svg(std::span<const CurvePoint> curve, const std::string& title) {
  constexpr double width = 480, height = 320, left = 50, right = 20, top = 30, bottom = 40;
  double lo = 0.0, hi = 1.0;
  int max_b = 0;
  for (const auto& p : curve) {
    lo = std::min(lo, p.mean - p.stderr_.value_or(0.0));
    hi = std::max(hi, p.mean + p.stderr_.value_or(0.0));
    max_b = std::max(max_b, p.budget);
  }
  // The full-budget point sits one step right of the largest finite budget.
  const int full_at = max_b + 1;
  const auto pos = [&](const CurvePoint& p) { return p.full() ? full_at : p.budget; };
  const auto x = [&](double b) { return left + (width - left - right) * b / full_at; };
  const auto y = [&](double v) {
    return top + (height - top - bottom) * (1.0 - (v - lo) / (hi - lo));
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n"
      << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << y(lo) << "\" x2=\"" << width - right
      << "\" y2=\"" << y(lo) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << y(lo) << "\" stroke=\"black\"/>\n";
  for (const double v : {lo, 0.0, 0.5, 1.0, hi}) {
    if (v < lo || v > hi) continue;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4
        << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(v) << "</text>\n";
  }
  std::string points;
  for (const auto& p : curve) {
    points += format_number(x(pos(p))) + "," + format_number(y(p.mean)) + " ";
    svg << "<text x=\"" << x(pos(p)) << "\" y=\"" << height - bottom + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">"
        << (p.full() ? std::string("all") : std::to_string(p.budget)) << "</text>\n";
    if (p.stderr_)
      svg << "<line x1=\"" << x(pos(p)) << "\" y1=\"" << y(p.mean - *p.stderr_) << "\" x2=\""
          << x(pos(p)) << "\" y2=\"" << y(p.mean + *p.stderr_)
          << "\" stroke=\"steelblue\"/>\n";
  }
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" << points
      << "\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"" << height - 6
      << "\" text-anchor=\"middle\" font-size=\"11\">query budget B</text>\n"
      << "</svg>\n";
  return svg.str();
}

}  // namespace redopt

#endif  // REDOPT_HARNESS_HPP
