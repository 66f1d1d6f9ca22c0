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

// Acceptance gate. Runs each criterion at its stated tolerance and time
// limit, prints one PASS/FAIL line per criterion and exits nonzero if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "redopt/harness.hpp"
#include "redopt/synthetic.hpp"
#include "support.hpp"

namespace redopt {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

Outcome news_fixture_objectives() {
  const auto ds = load_dataset(testing::data_path("news_fixture.json"));
  const App& app = ds.app("news");
  const ReplayOracle replay(ds.surveys, ds.apps);
  const Specification spec(0.5, {0.0, 0.5, 0.5});
  const std::vector<std::pair<std::string, double>> expected = {
      {"high_quality", 1.00075}, {"medium_quality", 0.738},
      {"low_quality", 0.38975},  {"image_removal", 0.57975}};

  std::vector<ScoredReduction> scored;
  double worst = 0.0;
  for (const auto& [id, j] : expected) {
    const Reduction& r = app.at(id);
    const UserScore u = replay(r);
    worst = std::max(worst, std::abs(objective(u, r.savings, spec) - j));
    scored.push_back({r, u});
  }
  const std::string argmax = argmax_objective(scored, spec).id;

  Rng rng(1);
  const Oracle oracle = [&](const Reduction& r) { return replay(r); };
  const auto trace = run_session(app, spec, static_cast<int>(app.reductions.size()),
                                 flat_prior(kFeatureDim, 0.1, 20.0), oracle, rng);
  const bool ok = worst <= 1e-9 && argmax == "high_quality" &&
                  trace.recommendation == std::optional<std::string>("high_quality");
  return {ok, "max |J - hand| = " + fmt(worst) + ", argmax " + argmax + ", session picks " +
                  trace.recommendation.value_or("nothing")};
}

Outcome offline_variant() {
  Rng rng(20190);
  std::uniform_int_distribution<int> size(1, 15);
  std::normal_distribution<double> normal(0.0, 0.3);
  int matches = 0;
  const int instances = 500;
  for (int k = 0; k < instances; ++k) {
    const App app = testing::random_app(rng, size(rng), "app" + std::to_string(k));
    const Specification spec = testing::random_spec(rng);
    WeightVector truth = Eigen::VectorXd::NullaryExpr(kFeatureDim, [&] { return normal(rng); });
    truth[kBiasIndex] = 0.5;
    std::vector<double> u;
    for (const auto& r : app.reductions) u.push_back(predict_score(truth, r.features).value());
    const Oracle noiseless = [&](const Reduction& r) { return predict_score(truth, r.features); };
    const auto trace = run_session(app, spec, static_cast<int>(app.reductions.size()),
                                   flat_prior(kFeatureDim, 0.1, 20.0), noiseless, rng);
    matches += trace.recommendation == testing::brute_force_argmax(app, u, spec);
  }
  return {matches == instances, std::to_string(matches) + "/" + std::to_string(instances) +
                                    " match brute force"};
}

Outcome conjugate_posterior() {
  Rng rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_closed = 0.0, worst_seq = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Index d = 1 + k % 16;
    PriorParams prior;
    prior.mean = Eigen::VectorXd::NullaryExpr(d, [&] { return unit(rng) - 0.5; });
    prior.stdev = Eigen::VectorXd::NullaryExpr(d, [&] { return 0.05 + unit(rng); });
    prior.noise_sd = 0.05 + 0.5 * unit(rng);
    prior.scale = 0.5 + 20 * unit(rng);
    const int n = 2 + k % 20;
    std::vector<Observation> data;
    Eigen::MatrixXd phi(n, d);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      FeatureVector f = Eigen::VectorXd::NullaryExpr(d, [&] { return unit(rng); });
      const UserScore s(unit(rng));
      phi.row(i) = f.transpose();
      y[i] = s.value();
      data.push_back({f, s});
    }
    const auto ours = posterior_update(prior, data);
    const auto ref = testing::closed_form_posterior(prior, phi, y);
    worst_closed = std::max({worst_closed, (ours.mean - ref.mean).cwiseAbs().maxCoeff(),
                             (ours.covariance - ref.covariance).cwiseAbs().maxCoeff()});

    const auto cut = static_cast<long>(1 + k % (n - 1));
    const std::vector<Observation> first(data.begin(), data.begin() + cut);
    const std::vector<Observation> second(data.begin() + cut, data.end());
    const auto chained = condition(posterior_update(prior, first), second, prior.noise_sd);
    worst_seq = std::max({worst_seq, (ours.mean - chained.mean).cwiseAbs().maxCoeff(),
                          (ours.covariance - chained.covariance).cwiseAbs().maxCoeff()});
  }
  return {worst_closed <= 1e-8 && worst_seq <= 1e-8,
          "max diff vs closed form " + fmt(worst_closed) + ", sequential vs batch " +
              fmt(worst_seq)};
}

Outcome ard_recovery() {
  Rng rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 200;
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(kFeatureDim);
  truth[1] = 0.7;
  truth[6] = -0.5;
  truth[11] = 0.3;
  Eigen::MatrixXd x(n, kFeatureDim);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = normal(rng);
    y[i] = x.row(i).dot(truth) + 0.05 * normal(rng);
  }
  const auto prior = fit_ard(x, y);
  double worst = 0.0, min_active = 1e300, max_inactive = 0.0;
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    if (truth[j] != 0.0) {
      worst = std::max(worst, std::abs(prior.mean[j] - truth[j]));
      min_active = std::min(min_active, prior.stdev[j]);
    } else {
      max_inactive = std::max(max_inactive, prior.stdev[j]);
    }
  }
  const double ratio = min_active / max_inactive;
  return {worst <= 0.1 && ratio >= 5.0,
          "max active |mu - truth| = " + fmt(worst) + ", sigma0 active/inactive = " + fmt(ratio)};
}

/// Leave-one-out rows on the calibrated corpora, λ=1, α=(0,0,1).
std::vector<ResultRow> calibrated_rows(PriorMode mode, std::vector<int> budgets, int runs) {
  std::vector<ResultRow> all;
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    CorpusOptions opt;
    opt.seed = seed;
    const auto corpus = make_synthetic_corpus(opt);
    ExperimentConfig config;
    config.lambdas = {1.0};
    config.alphas = {{0.0, 0.0, 1.0}};
    config.budgets = budgets;
    config.runs = runs;
    config.seed = seed;
    config.prior = mode;
    auto rows = leave_one_out_eval(corpus.dataset, config);
    for (auto& r : rows) r.app_id = "c" + std::to_string(seed) + "/" + r.app_id;
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

Outcome budget_monotonicity() {
  const auto curve =
      rho_curve(calibrated_rows(PriorMode::kInformative, {0, 2, 4, kFullBudget}, 3));
  const auto& b0 = curve[0];
  const auto& b2 = curve[1];
  const auto& b4 = curve[2];
  const auto& full = curve[3];
  const bool ok = b0.n >= 200 && b2.mean >= b0.mean - 0.01 && b4.mean >= 0.85 &&
                  full.full() && full.mean == 1.0;
  return {ok, std::to_string(b0.n) + " instances; rho B=0 " + fmt(b0.mean) + ", B=2 " +
                  fmt(b2.mean) + ", B=4 " + fmt(b4.mean) + ", B=|R| " + fmt(full.mean)};
}

Outcome prior_value() {
  const auto informative = rho_curve(calibrated_rows(PriorMode::kInformative, {0}, 3));
  const auto flat = rho_curve(calibrated_rows(PriorMode::kFlat, {0}, 3));
  const double gain = informative[0].mean - flat[0].mean;
  return {gain >= 0.1, "rho at B=0: informative " + fmt(informative[0].mean) + ", flat " +
                           fmt(flat[0].mean) + ", difference " + fmt(gain)};
}

Outcome spec_sensitivity() {
  const Specification net(3.0, {0.0, 0.0, 1.0});
  std::vector<double> cross, matched;
  for (std::uint64_t seed = 7; seed < 10; ++seed) {
    CorpusOptions opt;
    opt.seed = seed;
    opt.anticorrelated = true;
    const auto corpus = make_synthetic_corpus(opt);
    ExperimentConfig config;
    config.lambdas = {3.0};
    config.alphas = {{1.0, 0.0, 0.0}};
    config.budgets = {4};
    config.runs = 3;
    config.seed = seed;
    config.evaluate_under = net;
    for (const auto& r : leave_one_out_eval(corpus.dataset, config))
      if (r.rho) cross.push_back(*r.rho);
    config.alphas = {{0.0, 0.0, 1.0}};
    for (const auto& r : leave_one_out_eval(corpus.dataset, config))
      if (r.rho) matched.push_back(*r.rho);
  }
  const double c = mean_of(cross), m = mean_of(matched);
  return {c < 0.5 && m >= 0.85, "B=4, λ=3: cpu-optimized under net-only rho " + fmt(c) + " (" +
                                    std::to_string(cross.size()) + " sessions), matched rho " +
                                    fmt(m) + " (" + std::to_string(matched.size()) + ")"};
}

Outcome binarized_accuracy_curve() {
  const auto ds = load_dataset(testing::data_path("synthetic_corpus.json"));
  ExperimentConfig config;
  config.lambdas = {1.0};
  config.alphas = {{0.0, 0.0, 1.0}};
  config.budgets = {0, 1, 2, 3, 4, kFullBudget};
  config.runs = 200;
  config.seed = 2019;
  const auto rows = accuracy_sweep(ds, config);
  double full_min = 1.0;
  for (const auto& r : rows)
    if (r.full_budget) full_min = std::min(full_min, r.accuracy);
  const auto curve = accuracy_curve(rows);
  std::string means;
  for (const auto& p : curve)
    means += (p.full() ? std::string("all") : std::to_string(p.budget)) + ":" + fmt(p.mean) + " ";
  return {full_min == 1.0 && is_non_decreasing(curve, 0.02),
          "200 seeds; min accuracy at B=|R| " + fmt(full_min) + "; means " + means};
}

Outcome evaluate_determinism() {
  const auto dir = testing::temp_dir("acceptance");
  const auto run = [&](const std::string& out) {
    const std::string cmd = std::string("'") + REDOPT_CLI_PATH + "' evaluate --dataset '" +
                            testing::data_path("synthetic_corpus.json").string() + "' --config '" +
                            testing::data_path("default_config.json").string() + "' --out '" +
                            (dir / out).string() + "' >/dev/null";
    return std::system(cmd.c_str());
  };
  const int a = run("a.csv");
  const int b = run("b.csv");
  bool same = false;
  std::size_t bytes = 0;
  if (a == 0 && b == 0) {
    const auto x = detail::read_file(dir / "a.csv");
    same = x == detail::read_file(dir / "b.csv");
    bytes = x.size();
  }
  fs::remove_all(dir);
  return {same, "exit codes " + std::to_string(a) + "/" + std::to_string(b) + ", " +
                    std::to_string(bytes) + " bytes, identical: " + (same ? "yes" : "no")};
}

}  // namespace
}  // namespace redopt

int main() {
  using namespace redopt;
  const std::vector<Criterion> criteria = {
      {"news-fixture-objectives-and-argmax", 1, news_fixture_objectives},
      {"offline-variant-equals-brute-force", 30, offline_variant},
      {"conjugate-posterior-closed-form", 10, conjugate_posterior},
      {"ard-sparse-recovery", 30, ard_recovery},
      {"budget-monotonicity", 300, budget_monotonicity},
      {"prior-value-at-zero-queries", 120, prior_value},
      {"specification-sensitivity", 120, spec_sensitivity},
      {"binarized-accuracy-curve", 120, binarized_accuracy_curve},
      {"evaluate-determinism", 300, evaluate_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_s;
    const bool ok = o.ok && in_time;
    failed += !ok;
    std::printf("%s %-36s %7.2fs (limit %gs%s)  %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs,
                c.limit_s, in_time ? "" : ", exceeded", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
