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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "redopt/bandit.hpp"
#include "redopt/io.hpp"
#include "support.hpp"

namespace redopt {
namespace {

namespace fs = std::filesystem;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kInternal;
}

TEST(LoadDataset, NewsFixtureFixture) {
  const auto ds = load_dataset(testing::data_path("news_fixture.json"));
  ASSERT_EQ(ds.apps.size(), 1u);
  ASSERT_EQ(ds.apps[0].reductions.size(), 4u);
  EXPECT_EQ(ds.surveys.size(), 40u);
  const auto& high = ds.apps[0].at("high_quality");
  EXPECT_NEAR(high.savings.mem, 0.083, 1e-12);
  EXPECT_NEAR(high.savings.net, 0.720, 1e-12);
  EXPECT_DOUBLE_EQ(high.features[kBiasIndex], 1.0);
  EXPECT_TRUE(ds.warnings.empty());
}

TEST(LoadDataset, MalformedSuite) {
  const auto expected = nlohmann::json::parse(
      detail::read_file(testing::data_path("malformed/expected_codes.json")));
  int checked = 0;
  for (const auto& [file, code] : expected.items()) {
    SCOPED_TRACE(file);
    const auto path = testing::data_path("malformed/" + file);
    try {
      load_dataset(path);
      ADD_FAILURE() << "loaded malformed file";
    } catch (const Error& e) {
      EXPECT_EQ(to_string(e.code()), code.get<std::string>()) << e.what() << " " << e.detail();
      EXPECT_NE(e.detail().find(path.string()), std::string::npos) << e.detail();
    }
    ++checked;
  }
  EXPECT_GE(checked, 12);
}

TEST(LoadDataset, UnknownReductionNamesTheId) {
  try {
    load_dataset(testing::data_path("malformed/survey_unknown_reduction.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIntegrity);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(LoadDataset, TruncatedJsonReportsLine) {
  try {
    load_dataset(testing::data_path("malformed/truncated.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(LoadDataset, MissingFile) {
  try {
    load_dataset("/nonexistent/data.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(e.detail().find("/nonexistent/data.json"), std::string::npos);
  }
}

TEST(ParseDataset, EmptyAppsIsFlagged) {
  const auto ds = parse_dataset({{"schema_version", "1"}, {"apps", nlohmann::json::array()}});
  EXPECT_TRUE(ds.apps.empty());
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_EQ(ds.warnings[0], "no optimizable apps");
}

TEST(Dataset, RoundTrip) {
  const auto ds = load_dataset(testing::data_path("news_fixture.json"));
  const auto dir = testing::temp_dir("io");
  save_dataset(ds, dir / "copy.json");
  const auto back = load_dataset(dir / "copy.json");
  ASSERT_EQ(back.apps.size(), ds.apps.size());
  for (std::size_t i = 0; i < ds.apps[0].reductions.size(); ++i) {
    const auto& a = ds.apps[0].reductions[i];
    const auto& b = back.apps[0].reductions[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.kind, b.kind);
    EXPECT_EQ(a.views, b.views);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.savings, b.savings);
    EXPECT_EQ(a.asset_refs, b.asset_refs);
  }
  ASSERT_EQ(back.surveys.size(), ds.surveys.size());
  for (std::size_t i = 0; i < ds.surveys.size(); ++i) {
    EXPECT_EQ(back.surveys[i].user_id, ds.surveys[i].user_id);
    EXPECT_EQ(back.surveys[i].rating, ds.surveys[i].rating);
  }
  EXPECT_EQ(dataset_to_json(back), dataset_to_json(ds));
  fs::remove_all(dir);
}

TEST(Prior, RoundTripIsExact) {
  Rng rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PriorParams p;
  p.mean = Eigen::VectorXd::NullaryExpr(16, [&] { return unit(rng) - 0.5; });
  p.stdev = Eigen::VectorXd::NullaryExpr(16, [&] { return 1e-6 + unit(rng); });
  p.noise_sd = 0.0731;
  p.scale = 20.0;
  const auto dir = testing::temp_dir("prior");
  save_prior(p, dir / "p.json");
  const auto q = load_prior(dir / "p.json");
  EXPECT_EQ(p.mean, q.mean);
  EXPECT_EQ(p.stdev, q.stdev);
  EXPECT_EQ(p.noise_sd, q.noise_sd);
  EXPECT_EQ(p.scale, q.scale);
  fs::remove_all(dir);
}

TEST(Prior, WrongDimensionRejected) {
  auto doc = prior_to_json(flat_prior(12, 0.1, 20));
  EXPECT_EQ(code_of([&] { prior_from_json(doc); }), ErrorCode::kDimension);
}

TEST(Prior, UnknownVersionListsSupported) {
  auto doc = prior_to_json(flat_prior(16, 0.1, 20));
  doc["schema_version"] = "9";
  try {
    prior_from_json(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.detail().find("supported versions: 1"), std::string::npos);
  }
}

TEST(Trace, RoundTrip) {
  SessionTrace t;
  t.spec = Specification(0.5, {0.0, 0.5, 0.5});
  t.budget = 3;
  t.steps = {{"a", UserScore(0.25), 1.1, 0.9}, {"b", UserScore(1.0), 0.3, 0.2}};
  t.recommendation = "a";
  t.estimates = {{"a", UserScore(0.25), true}, {"c", UserScore(0.6), false}};
  t.rho = -0.5;
  t.warnings = {"w"};
  const auto back = trace_from_json(trace_to_json(t));
  EXPECT_EQ(trace_to_json(back), trace_to_json(t));
  EXPECT_EQ(back.spec, t.spec);
  EXPECT_EQ(*back.recommendation, "a");

  SessionTrace aborted;
  aborted.aborted = true;
  aborted.abort_reason = "timed out";
  const auto again = trace_from_json(trace_to_json(aborted));
  EXPECT_TRUE(again.aborted);
  EXPECT_FALSE(again.recommendation.has_value());
  EXPECT_FALSE(again.rho.has_value());
}

TEST(Spec, OffSimplexRejectedOnLoad) {
  nlohmann::json doc = {{"lambda", 1.0}, {"alpha", {{"cpu", 0.5}, {"mem", 0.5}, {"net", 2e-9}}}};
  EXPECT_EQ(code_of([&] { spec_from_json(doc); }), ErrorCode::kValidation);
  doc["alpha"]["net"] = 5e-10;
  EXPECT_NO_THROW(spec_from_json(doc));
}

ResultRow row(std::string app, int budget, int run, std::optional<double> rho) {
  ResultRow r;
  r.app_id = std::move(app);
  r.spec = Specification(1.0, {0, 0, 1});
  r.budget = budget;
  r.run = run;
  r.recommendation = "r1";
  r.rho = rho;
  r.queries = budget;
  return r;
}

TEST(ExportResults, HeaderOnlyWhenEmpty) {
  EXPECT_EQ(results_csv({}), std::string(kResultsHeader) + "\n");
}

TEST(ExportResults, SortsRowsAndLeavesUndefinedRhoEmpty) {
  auto undefined = row("a", 0, 0, std::nullopt);
  undefined.flag = "degenerate";
  const std::string csv = results_csv({row("b", 1, 0, 0.5), undefined});
  const std::string expected = std::string(kResultsHeader) + "\n" +
                               "a,1,0,0,1,0,0,r1,,0,,degenerate\n"
                               "b,1,0,0,1,1,0,r1,0.5,1,,\n";
  EXPECT_EQ(csv, expected);
}

TEST(ExportResults, WritesFile) {
  const auto dir = testing::temp_dir("csv");
  export_results({row("x", 2, 1, 1.0)}, dir / "out.csv");
  EXPECT_EQ(detail::read_file(dir / "out.csv"), results_csv({row("x", 2, 1, 1.0)}));
  fs::remove_all(dir);
}

TEST(CsvField, QuotesWhenNeeded) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(1.0 / 3), "0.3333333333333333");
  EXPECT_EQ(std::stod(format_number(0.1 + 0.2)), 0.1 + 0.2);
}

}  // namespace
}  // namespace redopt
