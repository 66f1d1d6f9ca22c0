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
 * @file service.hpp
 *
 * Interactive personalization sessions. Each session runs the selection loop
 * on its own worker thread with an InteractiveOracle as the query channel;
 * the HTTP handlers only observe the oracle and feed it ratings.
 *
 * State machine: Selecting -> AwaitingRating -> (Selecting | Done), and any
 * state -> Aborted on timeout or shutdown. Finished sessions are persisted as
 * JSON in the session directory; on restart they are readable again, while
 * sessions that were still in flight come back as Aborted.
 */

#ifndef REDOPT_SERVICE_HPP
#define REDOPT_SERVICE_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

// Eigen (via the redopt headers) must precede httplib, whose <resolv.h>
// defines a macro `_res` that collides with Eigen parameter names.
#include "redopt/bandit.hpp"
#include "redopt/domain.hpp"
#include "redopt/error.hpp"
#include "redopt/io.hpp"
#include "redopt/oracles.hpp"
#include "redopt/random.hpp"

#include <httplib.h>
#include <json.hpp>

namespace redopt {

enum class SessionState { kSelecting, kAwaitingRating, kDone, kAborted };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::kSelecting: return "selecting";
    case SessionState::kAwaitingRating: return "awaiting_rating";
    case SessionState::kDone: return "done";
    case SessionState::kAborted: return "aborted";
  }
  return "aborted";
}

inline SessionState parse_session_state(std::string_view s) {
  for (const auto st : {SessionState::kSelecting, SessionState::kAwaitingRating,
                        SessionState::kDone, SessionState::kAborted})
    if (to_string(st) == s) return st;
  fail(ErrorCode::kParse, "unknown session state", std::string(s));
}

/// Immutable view of a session at one instant.
struct SessionSnapshot {
  std::string id;
  std::string app_id;
  Specification spec;
  int budget = 0;
  SessionState state = SessionState::kSelecting;
  std::optional<PendingQuery> pending;
  /// Completed steps so far; the full trace once the session is finished.
  SessionTrace trace;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;
};

struct ServiceOptions {
  std::filesystem::path session_dir;  // empty disables persistence
  std::chrono::milliseconds rating_timeout = std::chrono::minutes(15);
  /// Upper bound on how long a request waits for the selection loop.
  std::chrono::milliseconds settle_timeout = std::chrono::seconds(30);
  std::optional<std::uint64_t> seed;  // fixed seed for reproducible sessions
};

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class SessionManager {
 public:
  SessionManager(DatasetFile dataset, PriorParams prior, ServiceOptions options = {})
      : dataset_(std::move(dataset)), prior_(std::move(prior)), options_(std::move(options)) {
    prior_.validate();
    for (const auto& app : dataset_.apps)
      for (const auto& r : app.reductions)
        if (r.features.size() != prior_.dim())
          fail(ErrorCode::kDimension, "dataset features do not match prior dimension", r.id);
    base_seed_ = options_.seed ? *options_.seed : std::random_device{}();
    if (!options_.session_dir.empty()) {
      std::filesystem::create_directories(options_.session_dir);
      restore();
    }
  }

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  ~SessionManager() { shutdown(); }

  const DatasetFile& dataset() const noexcept { return dataset_; }

  std::string create_session(const std::string& app_id, const Specification& spec, int budget) {
    const App& app = dataset_.app(app_id);
    if (budget < 0) fail(ErrorCode::kValidation, "budget must be nonnegative");
    if (app.reductions.empty()) fail(ErrorCode::kValidation, "app has no reductions", app_id);
    if (stopping_) fail(ErrorCode::kGone, "service is shutting down");

    auto s = std::make_shared<Session>(options_.rating_timeout);
    s->app_id = app_id;
    s->spec = spec;
    s->budget = budget;
    s->created_ms = s->updated_ms = now_ms();
    {
      std::unique_lock lock(sessions_mu_);
      do {
        s->id = make_id(counter_++);
      } while (sessions_.contains(s->id));
      sessions_[s->id] = s;
    }
    const std::uint64_t seed = session_seed(s->id);
    std::lock_guard op(s->op_mu);
    s->worker = std::thread([this, s, &app, seed] { run_worker(*s, app, seed); });
    settle(*s);
    persist(*s);
    return s->id;
  }

  SessionSnapshot snapshot(const std::string& id) const { return snapshot_of(*find(id)); }

  PendingQuery next_query(const std::string& id) {
    auto s = find(id);
    std::lock_guard op(s->op_mu);
    settle(*s);
    const auto snap = snapshot_of(*s);
    if (snap.state == SessionState::kAborted)
      fail(ErrorCode::kGone, "session was aborted", snap.trace.abort_reason);
    if (snap.state != SessionState::kAwaitingRating || !snap.pending)
      fail(ErrorCode::kConflict, "session is not awaiting a rating",
           std::string(to_string(snap.state)));
    return *snap.pending;
  }

  SessionSnapshot submit_rating(const std::string& id, const std::string& reduction_id,
                                int rating) {
    auto s = find(id);
    std::lock_guard op(s->op_mu);
    settle(*s);
    const auto before = snapshot_of(*s);
    if (before.state == SessionState::kAborted)
      fail(ErrorCode::kGone, "session was aborted", before.trace.abort_reason);
    if (before.state != SessionState::kAwaitingRating)
      fail(ErrorCode::kConflict, "session is not awaiting a rating",
           std::string(to_string(before.state)));
    s->oracle->submit(reduction_id, rating);
    settle(*s);
    return snapshot_of(*s);
  }

  SessionSnapshot recommendation(const std::string& id) const {
    auto s = find(id);
    const auto snap = snapshot_of(*s);
    if (snap.state == SessionState::kAborted)
      fail(ErrorCode::kGone, "session was aborted", snap.trace.abort_reason);
    if (snap.state != SessionState::kDone)
      fail(ErrorCode::kConflict, "session is not done yet", std::string(to_string(snap.state)));
    return snap;
  }

  std::size_t size() const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.size();
  }

  /// Aborts every in-flight session, joins workers and flushes state to disk.
  void shutdown() {
    if (stopping_.exchange(true)) return;
    std::vector<std::shared_ptr<Session>> all;
    {
      std::shared_lock lock(sessions_mu_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    for (const auto& s : all)
      if (s->oracle) s->oracle->close("service shutting down");
    for (const auto& s : all)
      if (s->worker.joinable()) s->worker.join();
  }

  /// Seed of the session's Thompson draws.
  std::uint64_t session_seed(const std::string& id) const { return derive_seed(base_seed_, id); }

 private:
  struct Session {
    explicit Session(std::chrono::milliseconds timeout)
        : oracle(std::make_unique<InteractiveOracle>(timeout)) {}

    std::string id;
    std::string app_id;
    Specification spec;
    int budget = 0;
    std::unique_ptr<InteractiveOracle> oracle;  // null for sessions restored from disk
    std::thread worker;
    std::mutex op_mu;  // serializes mutating requests
    mutable std::mutex persist_mu;

    mutable std::mutex mu;  // guards everything below
    std::condition_variable finished_cv;
    bool finished = false;
    SessionState final_state = SessionState::kDone;
    SessionTrace trace;
    std::int64_t created_ms = 0;
    std::int64_t updated_ms = 0;
  };

  std::string make_id(std::uint64_t n) const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "s%016llx",
                  static_cast<unsigned long long>(derive_seed(base_seed_, "session", n)));
    return buf;
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::kNotFound, "unknown session", id);
    return it->second;
  }

  void run_worker(Session& s, const App& app, std::uint64_t seed) {
    Rng rng(seed);
    const Oracle ask = [this, &s](const Reduction& r) {
      const UserScore u = s.oracle->ask(r);
      {
        std::lock_guard lock(s.mu);
        s.trace.steps.push_back({r.id, u, 0.0, 0.0});
        s.updated_ms = now_ms();
      }
      persist(s);
      return u;
    };
    SessionTrace result;
    try {
      result = run_session(app, s.spec, s.budget, prior_, ask, rng);
    } catch (const std::exception& e) {
      std::lock_guard lock(s.mu);
      result = s.trace;
      result.spec = s.spec;
      result.budget = s.budget;
      result.aborted = true;
      result.abort_reason = e.what();
    }
    {
      std::lock_guard lock(s.mu);
      s.trace = std::move(result);
      s.final_state = s.trace.aborted ? SessionState::kAborted : SessionState::kDone;
      s.finished = true;
      s.updated_ms = now_ms();
    }
    s.oracle->close(s.trace.aborted ? s.trace.abort_reason : "session finished");
    s.finished_cv.notify_all();
    persist(s);
  }

  /// Waits until the session either has a pending query or has finished.
  void settle(Session& s) const {
    if (!s.oracle) return;
    const auto deadline = InteractiveOracle::Clock::now() + options_.settle_timeout;
    while (InteractiveOracle::Clock::now() < deadline) {
      {
        std::lock_guard lock(s.mu);
        if (s.finished) return;
      }
      if (s.oracle->pending()) return;
      if (s.oracle->closed()) {
        std::unique_lock lock(s.mu);
        s.finished_cv.wait_until(lock, deadline, [&] { return s.finished; });
        return;
      }
      s.oracle->wait_pending(std::min(deadline, InteractiveOracle::Clock::now() +
                                                    std::chrono::milliseconds(50)));
    }
  }

  SessionSnapshot snapshot_of(const Session& s) const {
    SessionSnapshot snap;
    snap.id = s.id;
    snap.app_id = s.app_id;
    snap.spec = s.spec;
    snap.budget = s.budget;
    {
      std::lock_guard lock(s.mu);
      snap.trace = s.trace;
      snap.created_ms = s.created_ms;
      snap.updated_ms = s.updated_ms;
      if (s.finished) {
        snap.state = s.final_state;
        return snap;
      }
    }
    snap.trace.spec = s.spec;
    snap.trace.budget = s.budget;
    snap.pending = s.oracle ? s.oracle->pending() : std::nullopt;
    snap.state = snap.pending ? SessionState::kAwaitingRating : SessionState::kSelecting;
    return snap;
  }

  // -------------------------------------------------------------------------
  // Persistence

  static nlohmann::json session_json(const SessionSnapshot& snap) {
    return {{"schema_version", std::string(kSchemaVersion)},
            {"id", snap.id},
            {"app_id", snap.app_id},
            {"spec", spec_to_json(snap.spec)},
            {"budget", snap.budget},
            {"state", std::string(to_string(snap.state))},
            {"created_ms", snap.created_ms},
            {"updated_ms", snap.updated_ms},
            {"trace", trace_to_json(snap.trace)}};
  }

  void persist(const Session& s) const {
    if (options_.session_dir.empty()) return;
    std::lock_guard lock(s.persist_mu);
    const auto snap = snapshot_of(s);
    const auto path = options_.session_dir / (s.id + ".json");
    const auto tmp = options_.session_dir / (s.id + ".json.tmp");
    detail::write_file(tmp, session_json(snap).dump(2) + "\n");
    std::filesystem::rename(tmp, path);
  }

  void restore() {
    for (const auto& entry : std::filesystem::directory_iterator(options_.session_dir)) {
      if (entry.path().extension() != ".json") continue;
      const auto doc = detail::parse_json(detail::read_file(entry.path()), entry.path().string());
      auto s = std::make_shared<Session>(options_.rating_timeout);
      s->oracle.reset();
      s->id = doc.at("id").get<std::string>();
      s->app_id = doc.at("app_id").get<std::string>();
      s->spec = spec_from_json(doc.at("spec"));
      s->budget = doc.at("budget").get<int>();
      s->created_ms = doc.at("created_ms").get<std::int64_t>();
      s->updated_ms = doc.at("updated_ms").get<std::int64_t>();
      s->trace = trace_from_json(doc.at("trace"));
      s->finished = true;
      const auto state = parse_session_state(doc.at("state").get<std::string>());
      if (state == SessionState::kDone || state == SessionState::kAborted) {
        s->final_state = state;
      } else {
        s->final_state = SessionState::kAborted;
        s->trace.aborted = true;
        s->trace.abort_reason = "service restarted while the session was in progress";
        s->updated_ms = now_ms();
        persist(*s);
      }
      sessions_[s->id] = s;
    }
    counter_ = sessions_.size();
  }

  DatasetFile dataset_;
  PriorParams prior_;
  ServiceOptions options_;
  std::uint64_t base_seed_ = 0;
  std::atomic<std::uint64_t> counter_{0};
  std::atomic<bool> stopping_{false};
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// ---------------------------------------------------------------------------
// HTTP

namespace http {

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation:
    case ErrorCode::kDimension:
    case ErrorCode::kParse: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kGone: return 410;
    case ErrorCode::kIntegrity: return 422;
    default: return 500;
  }
}

inline nlohmann::json error_envelope(std::string_view code, const std::string& message,
                                     nlohmann::json detail) {
  return {{"code", code}, {"message", message}, {"detail", std::move(detail)}};
}

inline nlohmann::json reduction_json(const Reduction& r) {
  return {{"id", r.id},
          {"kind", std::string(to_string(r.kind))},
          {"summary", std::string(describe(r.kind))},
          {"views", r.views},
          {"asset_refs", r.asset_refs},
          {"savings", {{"cpu", r.savings.cpu}, {"mem", r.savings.mem}, {"net", r.savings.net}}}};
}

inline nlohmann::json pending_json(const PendingQuery& q, int budget, std::size_t reductions) {
  const int total = std::min<int>(budget, static_cast<int>(reductions));
  return {{"reduction_id", q.reduction_id},
          {"kind", std::string(to_string(q.kind))},
          {"summary", q.summary},
          {"views", q.views},
          {"asset_refs", q.asset_refs},
          {"progress", {{"index", q.sequence}, {"total", total}}},
          {"scale",
           {{"min", RawRating::kMin},
            {"max", RawRating::kMax},
            {"labels",
             {{"1", "extremely dissatisfied"}, {"5", "neutral"}, {"9", "extremely satisfied"}}}}}};
}

inline nlohmann::json snapshot_json(const SessionSnapshot& snap, const App& app) {
  nlohmann::json out = {{"id", snap.id},
                        {"app_id", snap.app_id},
                        {"spec", spec_to_json(snap.spec)},
                        {"budget", snap.budget},
                        {"state", std::string(to_string(snap.state))},
                        {"ratings", snap.trace.steps.size()},
                        {"created_ms", snap.created_ms},
                        {"updated_ms", snap.updated_ms}};
  out["pending"] = snap.pending ? pending_json(*snap.pending, snap.budget, app.reductions.size())
                                : nlohmann::json(nullptr);
  out["recommendation"] =
      snap.trace.recommendation ? nlohmann::json(*snap.trace.recommendation) : nlohmann::json(nullptr);
  return out;
}

inline nlohmann::json recommendation_json(const SessionSnapshot& snap, const App& app) {
  const Reduction& r = app.at(*snap.trace.recommendation);
  nlohmann::json rec = reduction_json(r);
  for (const auto& e : snap.trace.estimates)
    if (e.reduction_id == r.id) {
      rec["estimated_score"] = e.score.value();
      rec["observed"] = e.observed;
      rec["objective"] = objective(e.score, r.savings, snap.spec);
    }
  return {{"session_id", snap.id},
          {"recommendation", rec},
          {"trace", trace_to_json(snap.trace)}};
}

/// Binds a SessionManager to the REST endpoints.
class Server {
 public:
  explicit Server(SessionManager& sessions, std::string cors_origin = "*")
      : sessions_(sessions), cors_origin_(std::move(cors_origin)) {
    // httplib also sets SO_REUSEPORT, which would let a second instance
    // share the port silently instead of failing to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes),
                   sizeof(yes));
    });
    routes();
  }

  httplib::Server& raw() { return server_; }

  /// Serves a static UI bundle from `dir` at "/".
  bool mount_ui(const std::string& dir) { return server_.set_mount_point("/", dir); }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  void send(httplib::Response& res, int status, const nlohmann::json& body) const {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  Handler guarded(Handler h) const {
    return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        nlohmann::json detail = e.detail();
        send(res, status_for(e.code()), error_envelope(to_string(e.code()), e.what(), detail));
      } catch (const nlohmann::json::exception& e) {
        send(res, 400, error_envelope("parse", "malformed request body", e.what()));
      } catch (const std::exception& e) {
        send(res, 500, error_envelope("internal", "internal error", e.what()));
      }
    };
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) fail(ErrorCode::kParse, "request body is empty");
    return detail::parse_json(req.body, "request body");
  }

  void routes() {
    server_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", cors_origin_);
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    });
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    server_.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}, {"sessions", sessions_.size()}});
    }));

    server_.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto doc = body_of(req);
      const detail::Reader root(doc, "");
      const auto app_id = root.at("app_id").str();
      const Specification spec = spec_from_json(doc);
      const int budget = root.at("budget").integer();
      const auto id = sessions_.create_session(app_id, spec, budget);
      const auto snap = sessions_.snapshot(id);
      send(res, 201, snapshot_json(snap, sessions_.dataset().app(snap.app_id)));
    }));

    server_.Get(R"(/sessions/([^/]+))",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto snap = sessions_.snapshot(req.matches[1]);
                  send(res, 200, snapshot_json(snap, sessions_.dataset().app(snap.app_id)));
                }));

    server_.Get(R"(/sessions/([^/]+)/next)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  const auto q = sessions_.next_query(id);
                  const auto snap = sessions_.snapshot(id);
                  send(res, 200,
                       pending_json(q, snap.budget,
                                    sessions_.dataset().app(snap.app_id).reductions.size()));
                }));

    server_.Post(R"(/sessions/([^/]+)/rating)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto doc = body_of(req);
                   const detail::Reader root(doc, "");
                   const auto snap = sessions_.submit_rating(
                       req.matches[1], root.at("reduction_id").str(), root.at("rating").integer());
                   send(res, 200, snapshot_json(snap, sessions_.dataset().app(snap.app_id)));
                 }));

    server_.Get(R"(/sessions/([^/]+)/recommendation)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  try {
                    const auto snap = sessions_.recommendation(id);
                    send(res, 200, recommendation_json(snap, sessions_.dataset().app(snap.app_id)));
                  } catch (const Error& e) {
                    if (e.code() != ErrorCode::kGone) throw;
                    const auto snap = sessions_.snapshot(id);
                    send(res, 410,
                         error_envelope("gone", e.what(),
                                        {{"reason", e.detail()},
                                         {"trace", trace_to_json(snap.trace)}}));
                  }
                }));
  }

  SessionManager& sessions_;
  std::string cors_origin_;
  httplib::Server server_;
};

}  // namespace http

}  // namespace redopt

#endif  // REDOPT_SERVICE_HPP
