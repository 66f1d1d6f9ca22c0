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
 * @file io.hpp
 *
 * JSON persistence for datasets, fitted priors and session traces, and CSV
 * export of evaluation results. See docs/file_formats.md for the schemas.
 * Loading validates eagerly: a dataset that loads is referentially intact.
 */

#ifndef REDOPT_IO_HPP
#define REDOPT_IO_HPP

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "redopt/ard.hpp"
#include "redopt/bandit.hpp"
#include "redopt/domain.hpp"
#include "redopt/error.hpp"

namespace redopt {

using nlohmann::json;

inline constexpr std::string_view kSchemaVersion = "1";

struct DatasetFile {
  std::string schema_version = std::string(kSchemaVersion);
  std::vector<App> apps;
  std::vector<SurveyRecord> surveys;
  /// Non-fatal findings, e.g. an empty app list.
  std::vector<std::string> warnings;

  const App* find_app(std::string_view id) const {
    for (const auto& a : apps)
      if (a.id == id) return &a;
    return nullptr;
  }
  const App& app(std::string_view id) const {
    if (const auto* a = find_app(id)) return *a;
    fail(ErrorCode::kNotFound, "unknown app", std::string(id));
  }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write file", path.string());
  out << content;
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed", path.string());
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    fail(ErrorCode::kParse, "malformed JSON at line " + std::to_string(line),
         origin + ": " + e.what());
  }
}

/// Typed field access that reports the JSON pointer of the offending value.
class Reader {
 public:
  Reader(const json& node, std::string pointer) : node_(node), pointer_(std::move(pointer)) {}

  const json& node() const { return node_; }
  const std::string& pointer() const { return pointer_; }

  bool has(const char* key) const { return node_.is_object() && node_.contains(key); }

  Reader at(const char* key) const {
    if (!node_.is_object()) fail(ErrorCode::kParse, "expected an object", pointer_);
    if (!node_.contains(key))
      fail(ErrorCode::kParse, std::string("missing field '") + key + "'", pointer_);
    return Reader(node_.at(key), pointer_ + "/" + key);
  }

  std::vector<Reader> items() const {
    if (!node_.is_array()) fail(ErrorCode::kParse, "expected an array", pointer_);
    std::vector<Reader> out;
    for (std::size_t i = 0; i < node_.size(); ++i)
      out.emplace_back(node_[i], pointer_ + "/" + std::to_string(i));
    return out;
  }

  std::string str() const {
    if (!node_.is_string()) fail(ErrorCode::kParse, "expected a string", pointer_);
    return node_.get<std::string>();
  }

  double num() const {
    if (!node_.is_number()) fail(ErrorCode::kParse, "expected a number", pointer_);
    return node_.get<double>();
  }

  int integer() const {
    if (!node_.is_number_integer()) fail(ErrorCode::kParse, "expected an integer", pointer_);
    return node_.get<int>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& item : items()) out.push_back(item.num());
    return out;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (const auto& item : items()) out.push_back(item.str());
    return out;
  }

 private:
  const json& node_;
  std::string pointer_;
};

/// Re-raises validation failures of domain constructors with a location.
template <typename F>
auto located(const std::string& pointer, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) throw;
    fail(e.code(), e.what(), pointer + (e.detail().empty() ? "" : ": " + e.detail()));
  }
}

inline void check_version(const Reader& root, std::string_view what) {
  const auto version = root.at("schema_version").str();
  if (version != kSchemaVersion)
    fail(ErrorCode::kValidation,
         "unsupported " + std::string(what) + " schema_version '" + version + "'",
         "supported versions: " + std::string(kSchemaVersion));
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vector_from(const std::vector<double>& values) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<Eigen::Index>(i)] = values[i];
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets

inline ResourceSavings parse_savings(const detail::Reader& red) {
  const bool fractions = red.has("savings");
  const bool percents = red.has("savings_pct");
  if (fractions == percents)
    fail(ErrorCode::kParse, "exactly one of 'savings' or 'savings_pct' is required",
         red.pointer());
  const auto node = red.at(fractions ? "savings" : "savings_pct");
  const double unit = fractions ? 1.0 : 100.0;
  ResourceSavings w{node.at("cpu").num() / unit, node.at("mem").num() / unit,
                    node.at("net").num() / unit};
  detail::located(node.pointer(), [&] {
    w.validate();
    return 0;
  });
  return w;
}

/// Builds and validates a dataset from its JSON document.
inline DatasetFile parse_dataset(const json& doc) {
  using detail::Reader;
  const Reader root(doc, "");
  detail::check_version(root, "dataset");

  DatasetFile ds;
  std::set<std::string> app_ids;
  for (const auto& a : root.at("apps").items()) {
    App app;
    app.id = a.at("id").str();
    app.category = a.has("category") ? a.at("category").str() : std::string();
    if (app.id.empty()) fail(ErrorCode::kValidation, "app id is empty", a.pointer());
    if (!app_ids.insert(app.id).second)
      fail(ErrorCode::kIntegrity, "duplicate app id '" + app.id + "'", a.pointer());
    std::set<std::string> reduction_ids;
    for (const auto& r : a.at("reductions").items()) {
      Reduction red;
      red.id = r.at("id").str();
      red.app_id = app.id;
      red.kind = detail::located(r.at("kind").pointer(),
                                 [&] { return parse_reduction_kind(r.at("kind").str()); });
      red.views = r.at("views").strings();
      const auto features = r.at("features").numbers();
      red.features = detail::located(r.at("features").pointer(), [&] { return with_bias(features); });
      red.savings = parse_savings(r);
      if (r.has("asset_refs")) red.asset_refs = r.at("asset_refs").strings();
      detail::located(r.pointer(), [&] {
        red.validate();
        return 0;
      });
      if (!reduction_ids.insert(red.id).second)
        fail(ErrorCode::kIntegrity,
             "duplicate reduction id '" + red.id + "' in app '" + app.id + "'", r.pointer());
      app.reductions.push_back(std::move(red));
    }
    ds.apps.push_back(std::move(app));
  }
  if (ds.apps.empty()) ds.warnings.push_back("no optimizable apps");

  if (root.has("surveys")) {
    for (const auto& s : root.at("surveys").items()) {
      const auto app_id = s.at("app_id").str();
      const auto reduction_id = s.at("reduction_id").str();
      const auto view_id = s.at("view_id").str();
      const auto* app = ds.find_app(app_id);
      if (!app)
        fail(ErrorCode::kIntegrity, "survey references unknown app '" + app_id + "'",
             s.pointer());
      const auto* red = app->find(reduction_id);
      if (!red)
        fail(ErrorCode::kIntegrity,
             "survey references unknown reduction '" + reduction_id + "'", s.pointer());
      if (std::find(red->views.begin(), red->views.end(), view_id) == red->views.end())
        fail(ErrorCode::kIntegrity,
             "survey references view '" + view_id + "' not modified by reduction '" +
                 reduction_id + "'",
             s.pointer());
      const int rating = s.at("rating").integer();
      ds.surveys.push_back(SurveyRecord{
          app_id, reduction_id, view_id, s.at("user_id").str(),
          detail::located(s.at("rating").pointer(), [&] { return RawRating(rating); })});
    }
  }
  return ds;
}

inline DatasetFile load_dataset(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  const auto doc = detail::parse_json(text, path.string());
  try {
    return parse_dataset(doc);
  } catch (const Error& e) {
    fail(e.code(), e.what(), path.string() + (e.detail().empty() ? "" : " at " + e.detail()));
  }
}

inline json dataset_to_json(const DatasetFile& ds) {
  json apps = json::array();
  for (const auto& app : ds.apps) {
    json reds = json::array();
    for (const auto& r : app.reductions) {
      json features = json::array();
      for (std::size_t i = 0; i < kDescriptiveFeatures; ++i)
        features.push_back(r.features[static_cast<Eigen::Index>(i)]);
      json red = {{"id", r.id},
                  {"kind", std::string(to_string(r.kind))},
                  {"views", r.views},
                  {"features", features},
                  {"savings", {{"cpu", r.savings.cpu}, {"mem", r.savings.mem}, {"net", r.savings.net}}}};
      if (!r.asset_refs.empty()) red["asset_refs"] = r.asset_refs;
      reds.push_back(std::move(red));
    }
    apps.push_back({{"id", app.id}, {"category", app.category}, {"reductions", reds}});
  }
  json surveys = json::array();
  for (const auto& s : ds.surveys)
    surveys.push_back({{"app_id", s.app_id},
                       {"reduction_id", s.reduction_id},
                       {"view_id", s.view_id},
                       {"user_id", s.user_id},
                       {"rating", s.rating.value()}});
  return {{"schema_version", ds.schema_version}, {"apps", apps}, {"surveys", surveys}};
}

inline void save_dataset(const DatasetFile& ds, const std::filesystem::path& path) {
  detail::write_file(path, dataset_to_json(ds).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Priors

inline json prior_to_json(const PriorParams& prior) {
  return {{"schema_version", std::string(kSchemaVersion)},
          {"dim", prior.dim()},
          {"mean", detail::vector_json(prior.mean)},
          {"stdev", detail::vector_json(prior.stdev)},
          {"noise_sd", prior.noise_sd},
          {"scale", prior.scale}};
}

inline PriorParams prior_from_json(const json& doc,
                                   Eigen::Index expected_dim = static_cast<Eigen::Index>(kFeatureDim)) {
  const detail::Reader root(doc, "");
  detail::check_version(root, "prior");
  PriorParams prior;
  prior.mean = detail::vector_from(root.at("mean").numbers());
  prior.stdev = detail::vector_from(root.at("stdev").numbers());
  prior.noise_sd = root.at("noise_sd").num();
  prior.scale = root.at("scale").num();
  if (prior.mean.size() != expected_dim || prior.stdev.size() != expected_dim)
    fail(ErrorCode::kDimension,
         "prior vectors must have dimension " + std::to_string(expected_dim),
         "mean " + std::to_string(prior.mean.size()) + ", stdev " +
             std::to_string(prior.stdev.size()));
  prior.validate();
  return prior;
}

inline void save_prior(const PriorParams& prior, const std::filesystem::path& path) {
  prior.validate();
  detail::write_file(path, prior_to_json(prior).dump(2) + "\n");
}

inline PriorParams load_prior(const std::filesystem::path& path,
                              Eigen::Index expected_dim = static_cast<Eigen::Index>(kFeatureDim)) {
  const auto doc = detail::parse_json(detail::read_file(path), path.string());
  try {
    return prior_from_json(doc, expected_dim);
  } catch (const Error& e) {
    fail(e.code(), e.what(), path.string() + (e.detail().empty() ? "" : ": " + e.detail()));
  }
}

// ---------------------------------------------------------------------------
// Traces

inline json spec_to_json(const Specification& spec) {
  return {{"lambda", spec.lambda()},
          {"alpha", {{"cpu", spec.alpha()[0]}, {"mem", spec.alpha()[1]}, {"net", spec.alpha()[2]}}}};
}

inline Specification spec_from_json(const json& doc) {
  const detail::Reader root(doc, "");
  const auto alpha = root.at("alpha");
  return detail::located("/alpha", [&] {
    return Specification(root.at("lambda").num(),
                         {alpha.at("cpu").num(), alpha.at("mem").num(), alpha.at("net").num()});
  });
}

inline json trace_to_json(const SessionTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"reduction_id", s.reduction_id},
                     {"score", s.score.value()},
                     {"sampled_objective", s.sampled_objective},
                     {"estimated_objective", s.estimated_objective}});
  json estimates = json::array();
  for (const auto& e : t.estimates)
    estimates.push_back(
        {{"reduction_id", e.reduction_id}, {"score", e.score.value()}, {"observed", e.observed}});
  return {{"schema_version", std::string(kSchemaVersion)},
          {"spec", spec_to_json(t.spec)},
          {"budget", t.budget},
          {"steps", steps},
          {"recommendation", t.recommendation ? json(*t.recommendation) : json(nullptr)},
          {"estimates", estimates},
          {"rho", t.rho ? json(*t.rho) : json(nullptr)},
          {"warnings", t.warnings},
          {"aborted", t.aborted},
          {"abort_reason", t.abort_reason}};
}

inline SessionTrace trace_from_json(const json& doc) {
  const detail::Reader root(doc, "");
  detail::check_version(root, "trace");
  SessionTrace t;
  t.spec = spec_from_json(root.at("spec").node());
  t.budget = root.at("budget").integer();
  for (const auto& s : root.at("steps").items())
    t.steps.push_back({s.at("reduction_id").str(), UserScore(s.at("score").num()),
                       s.at("sampled_objective").num(), s.at("estimated_objective").num()});
  if (!root.at("recommendation").node().is_null())
    t.recommendation = root.at("recommendation").str();
  for (const auto& e : root.at("estimates").items())
    t.estimates.push_back({e.at("reduction_id").str(), UserScore(e.at("score").num()),
                           e.at("observed").node().get<bool>()});
  if (!root.at("rho").node().is_null()) t.rho = root.at("rho").num();
  t.warnings = root.at("warnings").strings();
  t.aborted = root.at("aborted").node().get<bool>();
  t.abort_reason = root.at("abort_reason").str();
  return t;
}

inline void save_trace(const SessionTrace& t, const std::filesystem::path& path) {
  detail::write_file(path, trace_to_json(t).dump(2) + "\n");
}

inline SessionTrace load_trace(const std::filesystem::path& path) {
  return trace_from_json(detail::parse_json(detail::read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string app_id;
  Specification spec;
  int budget = 0;  // effective budget, |R(a)| for a full-budget request
  bool full_budget = false;
  int run = 0;
  std::string recommendation;
  std::optional<double> rho;
  int queries = 0;
  /// Wall time in milliseconds; left empty unless timing is requested.
  std::optional<double> ms;
  /// Free-form marker, e.g. "degenerate" when rho is undefined.
  std::string flag;
};

inline constexpr std::string_view kResultsHeader =
    "app_id,lambda,alpha_cpu,alpha_mem,alpha_net,budget,run,recommendation,rho,queries,ms,flag";

/// Shortest decimal that round-trips.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Canonical row order: app, budget, run, then the specification.
inline void sort_results(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::forward_as_tuple(a.app_id, a.budget, a.run, a.spec.lambda(), a.spec.alpha()) <
           std::forward_as_tuple(b.app_id, b.budget, b.run, b.spec.lambda(), b.spec.alpha());
  });
}

inline std::string results_csv(std::vector<ResultRow> rows) {
  sort_results(rows);
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += csv_field(r.app_id) + ',' + format_number(r.spec.lambda()) + ',' +
           format_number(r.spec.alpha()[0]) + ',' + format_number(r.spec.alpha()[1]) + ',' +
           format_number(r.spec.alpha()[2]) + ',' + std::to_string(r.budget) + ',' +
           std::to_string(r.run) + ',' + csv_field(r.recommendation) + ',' +
           (r.rho ? format_number(*r.rho) : std::string()) + ',' + std::to_string(r.queries) +
           ',' + (r.ms ? format_number(*r.ms) : std::string()) + ',' + csv_field(r.flag) + '\n';
  }
  return out;
}

inline void export_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  detail::write_file(path, results_csv(rows));
}

}  // namespace redopt

#endif  // REDOPT_IO_HPP
