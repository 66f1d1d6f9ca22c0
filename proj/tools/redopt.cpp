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

// Command-line entry point: fit-prior, recommend, evaluate, serve, synth.
// Exit codes: 0 success, 1 user error, 2 internal error.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>

#include "redopt/ard.hpp"
#include "redopt/bandit.hpp"
#include "redopt/domain.hpp"
#include "redopt/error.hpp"
#include "redopt/harness.hpp"
#include "redopt/io.hpp"
#include "redopt/oracles.hpp"
#include "redopt/service.hpp"
#include "redopt/synthetic.hpp"

namespace {

using namespace redopt;

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

/// Parses "cpu=F,mem=F,net=F". Omitted resources are 0; the simplex check is
/// left to Specification.
std::array<double, kResourceCount> parse_alpha(const std::string& text) {
  std::array<double, kResourceCount> alpha{};
  std::array<bool, kResourceCount> seen{};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::kValidation, "alpha entries must look like name=value", item);
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    std::size_t k = 0;
    while (k < kResourceCount && kResourceNames[k] != name) ++k;
    if (k == kResourceCount)
      fail(ErrorCode::kValidation, "unknown resource in alpha (expected cpu, mem, net)", name);
    if (seen[k]) fail(ErrorCode::kValidation, "resource given twice in alpha", name);
    seen[k] = true;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty())
      fail(ErrorCode::kValidation, "alpha value is not a number", item);
    alpha[k] = v;
  }
  return alpha;
}

std::string spec_text(const Specification& spec) {
  return "lambda=" + format_number(spec.lambda()) + " alpha=cpu=" +
         format_number(spec.alpha()[0]) + ",mem=" + format_number(spec.alpha()[1]) +
         ",net=" + format_number(spec.alpha()[2]);
}

// ---------------------------------------------------------------------------

struct FitPriorArgs {
  std::string history, out;
  double scale = 20.0;
};

int cmd_fit_prior(const FitPriorArgs& a) {
  if (!(a.scale > 0.0)) fail(ErrorCode::kValidation, "--scale must be positive");
  const DatasetFile ds = load_dataset(a.history);
  const ReplayOracle replay(ds.surveys, ds.apps);
  const HistoricalDataset history = history_without(ds, replay, {});
  ArdOptions opts;
  opts.scale = a.scale;
  ArdDiagnostics diag;
  const PriorParams prior = fit_prior(history, opts, &diag);
  save_prior(prior, a.out);
  std::cout << "fitted prior on " << history.entries.size() << " reductions from "
            << ds.apps.size() << " apps (" << diag.iterations << " iterations"
            << (diag.converged ? "" : ", not converged") << ", " << diag.pruned.size()
            << " coefficients pruned, noise_sd " << format_number(prior.noise_sd) << ")\n";
  if (!diag.warning.empty()) std::cerr << "warning: " << diag.warning << "\n";
  std::cout << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RecommendArgs {
  std::string app, app_id, prior, alpha = "cpu=0,mem=0,net=1", oracle = "replay", truth;
  std::string trace_out;
  double lambda = 1.0, noise_sd = 0.0;
  int budget = 0;
  std::uint64_t seed = 0;
};

int cmd_recommend(const RecommendArgs& a) {
  const Specification spec(a.lambda, parse_alpha(a.alpha));
  if (a.budget < 0) fail(ErrorCode::kValidation, "--budget must be nonnegative");
  const DatasetFile ds = load_dataset(a.app);
  if (ds.apps.empty()) fail(ErrorCode::kValidation, "file contains no apps", a.app);
  if (a.app_id.empty() && ds.apps.size() > 1)
    fail(ErrorCode::kValidation, "file contains several apps; choose one with --app-id");
  const App& app = a.app_id.empty() ? ds.apps.front() : ds.app(a.app_id);
  const PriorParams prior =
      a.prior.empty() ? flat_prior(static_cast<Eigen::Index>(kFeatureDim), 0.1, 20.0)
                      : load_prior(a.prior);

  Oracle oracle;
  std::optional<std::vector<UserScore>> truth;
  std::optional<ReplayOracle> replay;
  std::optional<SyntheticOracle> synthetic;
  if (a.oracle == "replay") {
    replay.emplace(ds.surveys, ds.apps);
    if (const auto missing = replay->first_uncovered(app))
      fail(ErrorCode::kIntegrity, "missing survey data for replay", app.id + "/" + *missing);
    truth.emplace();
    for (const auto& r : app.reductions) truth->push_back((*replay)(r));
    oracle = [&](const Reduction& r) { return (*replay)(r); };
  } else if (a.oracle == "synthetic") {
    if (a.truth.empty()) fail(ErrorCode::kValidation, "--oracle synthetic requires --truth");
    const auto doc = detail::parse_json(detail::read_file(a.truth), a.truth);
    synthetic.emplace(truth_weights(doc, app.id), a.noise_sd, derive_seed(a.seed, "oracle"));
    truth.emplace();
    for (const auto& r : app.reductions) truth->push_back(synthetic->expected(r));
    oracle = [&](const Reduction& r) { return (*synthetic)(r); };
  } else {
    fail(ErrorCode::kValidation, "--oracle must be replay or synthetic", a.oracle);
  }

  int calls = 0;
  const Oracle logged = [&](const Reduction& r) {
    const UserScore u = oracle(r);
    ++calls;
    std::cout << "query " << calls << ": " << r.id << " (" << to_string(r.kind)
              << ") score " << format_number(u.value()) << "\n";
    return u;
  };

  Rng rng(derive_seed(a.seed, app.id));
  SessionTrace trace = run_session(app, spec, a.budget, prior, logged, rng);
  for (const auto& w : trace.warnings) std::cerr << "warning: " << w << "\n";

  std::cout << "app: " << app.id << "\n"
            << "specification: " << spec_text(spec) << "\n"
            << "budget: " << a.budget << "\n"
            << "oracle calls: " << trace.steps.size() << "\n";
  if (trace.aborted) fail(ErrorCode::kInternal, "session aborted", trace.abort_reason);

  const Reduction& rec = app.at(*trace.recommendation);
  const std::size_t idx = static_cast<std::size_t>(&rec - app.reductions.data());
  const auto& est = trace.estimates[idx];
  std::cout << "recommendation: " << rec.id << " (" << to_string(rec.kind) << ")\n"
            << "estimated score: " << format_number(est.score.value())
            << (est.observed ? " (observed)" : " (predicted)") << "\n"
            << "objective J: " << format_number(objective(est.score, rec.savings, spec)) << "\n";
  if (truth) {
    trace.rho = rho_for(app, spec, *truth, rec.id);
    std::cout << "true objective J: "
              << format_number(objective((*truth)[idx], rec.savings, spec)) << "\n"
              << "rho: "
              << (trace.rho ? format_number(*trace.rho)
                            : std::string("undefined (no reduction improves on the original app)"))
              << "\n";
  }
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    std::cout << "trace " << i + 1 << ": " << s.reduction_id << " score "
              << format_number(s.score.value()) << " sampled J "
              << format_number(s.sampled_objective) << " estimated J "
              << format_number(s.estimated_objective) << "\n";
  }
  if (!a.trace_out.empty()) save_trace(trace, a.trace_out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string dataset, config, out, curve, plot, meta;
  bool timing = false;
  unsigned threads = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const DatasetFile ds = load_dataset(a.dataset);
  ExperimentConfig config;
  if (!a.config.empty())
    config = parse_config(detail::parse_json(detail::read_file(a.config), a.config));
  if (a.timing) config.timing = true;
  if (a.threads > 0) config.threads = a.threads;

  const auto rows = leave_one_out_eval(ds, config);
  export_results(rows, a.out);
  std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";

  if (!a.curve.empty() || !a.plot.empty()) {
    const Specification first = config.specs().front();
    std::vector<ResultRow> subset;
    for (const auto& r : rows)
      if (r.spec == first) subset.push_back(r);
    const auto curve = rho_curve(subset);
    if (!a.curve.empty()) {
      detail::write_file(a.curve, curve_csv(curve));
      std::cout << "wrote curve for " << spec_text(first) << " to " << a.curve << "\n";
    }
    if (!a.plot.empty()) {
      detail::write_file(a.plot, curve_svg(curve, "mean rho vs budget, " + spec_text(first)));
      std::cout << "wrote plot to " << a.plot << "\n";
    }
  }
  if (!a.meta.empty()) {
    nlohmann::json meta = {
        {"dataset", a.dataset},
        {"apps", ds.apps.size()},
        {"rows", rows.size()},
        {"runs", config.runs},
        {"seed", config.seed},
        {"prior", config.prior == PriorMode::kFlat ? "flat" : "informative"},
        {"note", "results reflect the supplied dataset only; synthetic corpora do not "
                 "reproduce human-survey accuracy figures"}};
    detail::write_file(a.meta, meta.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string dataset, prior, session_dir, host = "127.0.0.1", ui_dir, cors_origin = "*";
  int port = 8080;
  int rating_timeout_s = 900;
};

int cmd_serve(const ServeArgs& a) {
  // Block termination signals before any thread starts so only the waiter
  // below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  DatasetFile ds = load_dataset(a.dataset);
  PriorParams prior;
  if (!a.prior.empty()) {
    prior = load_prior(a.prior);
  } else {
    const ReplayOracle replay(ds.surveys, ds.apps);
    prior = fit_prior(history_without(ds, replay, {}));
  }
  ServiceOptions opts;
  opts.session_dir = a.session_dir;
  opts.rating_timeout = std::chrono::seconds(a.rating_timeout_s);
  SessionManager sessions(std::move(ds), std::move(prior), opts);
  http::Server server(sessions, a.cors_origin);
  if (!a.ui_dir.empty() && !server.mount_ui(a.ui_dir))
    fail(ErrorCode::kValidation, "cannot serve UI directory", a.ui_dir);

  int port = a.port;
  if (port == 0) {
    port = server.bind_any_port(a.host);
    if (port < 0) fail(ErrorCode::kIo, "cannot bind any port", a.host);
  } else if (!server.bind(a.host, port)) {
    fail(ErrorCode::kIo, "cannot bind port (already in use?)", a.host + ":" + std::to_string(port));
  }
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  const bool ok = server.listen_after_bind();
  if (!ok && server.running()) server.stop();
  sessions.shutdown();
  // Wake the waiter if the server stopped for another reason.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "shut down; sessions flushed" << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out, truth_out;
  CorpusOptions corpus;
};

int cmd_synth(const SynthArgs& a) {
  const auto corpus = make_synthetic_corpus(a.corpus);
  save_dataset(corpus.dataset, a.out);
  std::size_t reductions = 0;
  for (const auto& app : corpus.dataset.apps) reductions += app.reductions.size();
  std::cout << "wrote " << corpus.dataset.apps.size() << " apps, " << reductions
            << " reductions, " << corpus.dataset.surveys.size() << " ratings to " << a.out
            << "\n";
  if (!a.truth_out.empty()) {
    detail::write_file(a.truth_out, truth_to_json(corpus).dump(2) + "\n");
    std::cout << "wrote ground truth to " << a.truth_out << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"redopt: personalized resource-saving app reductions", "redopt"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "redopt 1.0.0");

  FitPriorArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-prior", "Fit the prior on historical survey data");
  fit_cmd->add_option("--history", fit.history, "Dataset file with apps and surveys")
      ->required()
      ->envname("REDOPT_HISTORY");
  fit_cmd->add_option("--out", fit.out, "Prior file to write")->required()->envname("REDOPT_OUT");
  fit_cmd->add_option("--scale", fit.scale, "Prior covariance scale")
      ->capture_default_str()
      ->envname("REDOPT_SCALE");

  RecommendArgs rec;
  auto* rec_cmd = app.add_subcommand("recommend", "Recommend a reduction for one app");
  rec_cmd->add_option("--app", rec.app, "Dataset file holding the app")
      ->required()
      ->envname("REDOPT_APP");
  rec_cmd->add_option("--app-id", rec.app_id, "App to use when the file holds several")
      ->envname("REDOPT_APP_ID");
  rec_cmd->add_option("--prior", rec.prior, "Prior file (flat prior when omitted)")
      ->envname("REDOPT_PRIOR");
  rec_cmd->add_option("--lambda", rec.lambda, "Weight of resource savings")
      ->capture_default_str()
      ->envname("REDOPT_LAMBDA");
  rec_cmd->add_option("--alpha", rec.alpha, "Resource weights cpu=F,mem=F,net=F summing to 1")
      ->capture_default_str()
      ->envname("REDOPT_ALPHA");
  rec_cmd->add_option("--budget", rec.budget, "Number of queries")
      ->capture_default_str()
      ->envname("REDOPT_BUDGET");
  rec_cmd->add_option("--oracle", rec.oracle, "Query oracle")
      ->check(CLI::IsMember({"replay", "synthetic"}))
      ->capture_default_str()
      ->envname("REDOPT_ORACLE");
  rec_cmd->add_option("--truth", rec.truth, "Ground-truth weights file for --oracle synthetic")
      ->envname("REDOPT_TRUTH");
  rec_cmd->add_option("--noise-sd", rec.noise_sd, "Noise of the synthetic oracle")
      ->capture_default_str()
      ->envname("REDOPT_NOISE_SD");
  rec_cmd->add_option("--seed", rec.seed, "Random seed")
      ->capture_default_str()
      ->envname("REDOPT_SEED");
  rec_cmd->add_option("--trace-out", rec.trace_out, "Write the session trace as JSON")
      ->envname("REDOPT_TRACE_OUT");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Leave-one-out evaluation over a dataset");
  ev_cmd->add_option("--dataset", ev.dataset, "Dataset file with apps and surveys")
      ->required()
      ->envname("REDOPT_DATASET");
  ev_cmd->add_option("--config", ev.config, "Experiment configuration (defaults when omitted)")
      ->envname("REDOPT_CONFIG");
  ev_cmd->add_option("--out", ev.out, "Results CSV to write")->required()->envname("REDOPT_OUT");
  ev_cmd->add_option("--curve", ev.curve, "Write the rho-vs-budget curve CSV (first specification)")
      ->envname("REDOPT_CURVE");
  ev_cmd->add_option("--plot", ev.plot, "Write the rho-vs-budget curve as SVG")
      ->envname("REDOPT_PLOT");
  ev_cmd->add_option("--meta", ev.meta, "Write a JSON sidecar describing the run")
      ->envname("REDOPT_META");
  ev_cmd->add_flag("--timing", ev.timing, "Record per-session wall time in the ms column");
  ev_cmd->add_option("--threads", ev.threads, "Worker threads (overrides the config)")
      ->envname("REDOPT_THREADS");

  ServeArgs srv;
  auto* srv_cmd = app.add_subcommand("serve", "Run the interactive session service");
  srv_cmd->add_option("--dataset", srv.dataset, "Dataset file with the apps to personalize")
      ->required()
      ->envname("REDOPT_DATASET");
  srv_cmd->add_option("--prior", srv.prior, "Prior file (fitted on the dataset when omitted)")
      ->envname("REDOPT_PRIOR");
  srv_cmd->add_option("--port", srv.port, "TCP port (0 picks a free port)")
      ->capture_default_str()
      ->envname("REDOPT_PORT");
  srv_cmd->add_option("--host", srv.host, "Address to bind")
      ->capture_default_str()
      ->envname("REDOPT_HOST");
  srv_cmd->add_option("--session-dir", srv.session_dir, "Directory for persisted sessions")
      ->envname("REDOPT_SESSION_DIR");
  srv_cmd->add_option("--ui-dir", srv.ui_dir, "Static UI bundle to serve at /")
      ->envname("REDOPT_UI_DIR");
  srv_cmd->add_option("--cors-origin", srv.cors_origin, "Allowed CORS origin")
      ->capture_default_str()
      ->envname("REDOPT_CORS_ORIGIN");
  srv_cmd->add_option("--rating-timeout", srv.rating_timeout_s,
                      "Seconds to wait for a rating before aborting a session")
      ->capture_default_str()
      ->envname("REDOPT_RATING_TIMEOUT");

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "Generate a synthetic survey corpus");
  syn_cmd->add_option("--out", syn.out, "Dataset file to write")->required()->envname("REDOPT_OUT");
  syn_cmd->add_option("--truth-out", syn.truth_out, "Write ground-truth weights as JSON")
      ->envname("REDOPT_TRUTH_OUT");
  syn_cmd->add_option("--apps", syn.corpus.apps, "Number of apps")->capture_default_str();
  syn_cmd->add_option("--min-reductions", syn.corpus.min_reductions, "Fewest reductions per app")
      ->capture_default_str();
  syn_cmd->add_option("--max-reductions", syn.corpus.max_reductions, "Most reductions per app")
      ->capture_default_str();
  syn_cmd->add_option("--raters", syn.corpus.raters, "Simulated raters per reduction")
      ->capture_default_str();
  syn_cmd->add_option("--rater-noise", syn.corpus.rater_noise, "Rating noise on the 1-9 scale")
      ->capture_default_str();
  syn_cmd->add_flag("--anticorrelated", syn.corpus.anticorrelated,
                    "Reductions save either cpu or memory and network, never both");
  syn_cmd->add_option("--seed", syn.corpus.seed, "Random seed")
      ->capture_default_str()
      ->envname("REDOPT_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUser;
  }

  try {
    if (*fit_cmd) return cmd_fit_prior(fit);
    if (*rec_cmd) return cmd_recommend(rec);
    if (*ev_cmd) return cmd_evaluate(ev);
    if (*srv_cmd) return cmd_serve(srv);
    if (*syn_cmd) return cmd_synth(syn);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what();
    if (!e.detail().empty()) std::cerr << " (" << e.detail() << ")";
    std::cerr << "\n";
    return e.is_user_error() ? kExitUser : kExitInternal;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
