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
 * @file synthetic.hpp
 *
 * Generator for calibrated synthetic corpora: apps with image and transition
 * reductions whose user experience follows a known linear ground truth
 * (shared weights plus a per-app offset), surveyed by simulated raters on
 * the 1..9 scale. Used wherever real survey data is unavailable.
 */

#ifndef REDOPT_SYNTHETIC_HPP
#define REDOPT_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "redopt/ard.hpp"
#include "redopt/domain.hpp"
#include "redopt/io.hpp"
#include "redopt/random.hpp"

namespace redopt {

struct CorpusOptions {
  int apps = 20;
  int min_reductions = 6;
  int max_reductions = 12;
  int raters = 10;
  /// Standard deviation of individual ratings around 1 + 8u.
  double rater_noise = 0.8;
  /// Standard deviation of each app's offset from the shared weights.
  double app_deviation = 0.08;
  /// Reductions save either only cpu (transitions) or only memory and network
  /// (images), never both.
  bool anticorrelated = false;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  DatasetFile dataset;
  WeightVector shared_weights;
  std::vector<WeightVector> app_weights;  // parallel to dataset.apps
};

/// Shared ground-truth weights over the feature schema.
inline WeightVector reference_weights() {
  WeightVector w(static_cast<Eigen::Index>(kFeatureDim));
  w << 0.10,   // target_resolution
      -0.20,   // pixel_fraction_removed
      -0.05,   // images_affected
      -0.22,   // transition_removed
      -0.25,   // images_removed
      -0.12,   // downscale_log2
      -0.04,   // views_modified
      -0.22,   // primary_content
      -0.30,   // image_area_fraction
      -0.15,   // animation_seconds
      0.10,    // text_blocks
      0.0,     // median_font_size
      -0.05,   // activity_images
      0.0,     // view_tree_depth
      0.0,     // interactive_widgets
      0.88;    // bias
  return w;
}

namespace detail {

/// Coordinates that vary per app: how much a given app depends on its images
/// and transitions.
inline constexpr std::array<Eigen::Index, 4> kAppSpecificCoordinates = {3, 7, 8, 15};

struct Activity {
  std::string id;
  double text_blocks, font, images, depth, widgets;
  double image_area;
  bool primary_images;
  double source_px;
  double animation_s;
};

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline ReductionKind draw_kind(Rng& rng, bool anticorrelated) {
  if (anticorrelated) {
    static constexpr std::array<ReductionKind, 6> kinds = {
        ReductionKind::kImageRemoval, ReductionKind::kRes200, ReductionKind::kRes100,
        ReductionKind::kRes50, ReductionKind::kTransitionRemoval,
        ReductionKind::kTransitionRemoval};
    return kinds[std::uniform_int_distribution<std::size_t>(0, kinds.size() - 1)(rng)];
  }
  // Roughly the mix of reduction types seen across real apps.
  static constexpr std::array<int, 8> weights = {36, 5, 9, 13, 15, 15, 18, 28};
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return static_cast<ReductionKind>(pick(rng));
}

inline double target_px(ReductionKind kind) {
  switch (kind) {
    case ReductionKind::kRes400: return 400;
    case ReductionKind::kRes200: return 200;
    case ReductionKind::kRes100: return 100;
    case ReductionKind::kRes50: return 50;
    case ReductionKind::kRes20: return 20;
    default: return 0;
  }
}

}  // namespace detail

/// Feature vector and savings of applying `kind` to one activity.
inline std::pair<FeatureVector, ResourceSavings> synthesize_reduction(
    ReductionKind kind, const detail::Activity& act, int affected_images, int views,
    bool anticorrelated) {
  const bool transitions =
      kind == ReductionKind::kTransitionRemoval || kind == ReductionKind::kImageAndTransition;
  const bool images = kind != ReductionKind::kTransitionRemoval;
  const bool removal = kind == ReductionKind::kImageRemoval ||
                       kind == ReductionKind::kImageAndTransition;
  const double target = detail::target_px(kind);

  double resolution = 1.0, pixels_removed = 0.0, downscale = 0.0;
  if (images) {
    if (removal) {
      resolution = 0.0;
      pixels_removed = 1.0;
      downscale = 1.0;
    } else {
      const double ratio = std::min(1.0, target / act.source_px);
      resolution = target / 400.0;
      pixels_removed = 1.0 - ratio * ratio;
      downscale = std::min(1.0, std::log2(act.source_px / target) / 5.0);
    }
  }
  std::array<double, kDescriptiveFeatures> f = {
      resolution,
      pixels_removed,
      images ? affected_images / 10.0 : 0.0,
      transitions ? 1.0 : 0.0,
      removal ? 1.0 : 0.0,
      downscale,
      views / 5.0,
      images && act.primary_images ? 1.0 : 0.0,
      images ? act.image_area : 0.0,
      transitions ? act.animation_s : 0.0,
      act.text_blocks,
      act.font,
      act.images,
      act.depth,
      act.widgets,
  };

  ResourceSavings w;
  if (images) {
    const double share = 0.35 + 0.6 * act.image_area;
    w.net = std::clamp(share * (0.4 + 0.6 * pixels_removed), 0.0, 0.98);
    w.mem = std::clamp(0.05 + 0.35 * pixels_removed * act.image_area, 0.0, 0.6);
    if (!anticorrelated) w.cpu = 0.03 * pixels_removed;
  }
  if (transitions) {
    w.cpu = std::clamp(w.cpu + 0.25 + 0.9 * act.animation_s, 0.0, 0.95);
    if (!anticorrelated) w.mem = std::min(0.95, w.mem + 0.02);
  }
  return {with_bias(f), w};
}

/// Rating of one simulated rater for a true score u.
inline RawRating simulate_rating(double u, double noise, Rng& rng) {
  const double raw = 1.0 + 8.0 * u + std::normal_distribution<double>(0.0, noise)(rng);
  return RawRating(static_cast<int>(std::clamp(std::lround(raw), 1L, 9L)));
}

inline SyntheticCorpus make_synthetic_corpus(const CorpusOptions& opt = {}) {
  if (opt.apps < 1 || opt.min_reductions < 1 || opt.max_reductions < opt.min_reductions ||
      opt.raters < 1)
    fail(ErrorCode::kValidation, "invalid synthetic corpus options");
  Rng rng(derive_seed(opt.seed, "corpus"));
  SyntheticCorpus corpus;
  corpus.shared_weights = reference_weights();
  static constexpr std::array<const char*, 6> categories = {
      "news", "weather", "reading", "multimedia", "travel", "science"};

  for (int a = 0; a < opt.apps; ++a) {
    App app;
    char id[16];
    std::snprintf(id, sizeof(id), "app%02d", a);
    app.id = id;
    app.category = categories[static_cast<std::size_t>(a) % categories.size()];

    WeightVector theta = corpus.shared_weights;
    std::normal_distribution<double> offset(0.0, opt.app_deviation);
    for (const auto j : detail::kAppSpecificCoordinates) theta[j] += offset(rng);

    const int n_act = std::uniform_int_distribution<int>(2, 4)(rng);
    std::vector<detail::Activity> acts;
    for (int k = 0; k < n_act; ++k) {
      detail::Activity act;
      act.id = "Activity" + std::to_string(k);
      act.text_blocks = detail::uniform(rng, 0.0, 1.0);
      act.font = detail::uniform(rng, 0.5, 0.9);
      act.images = detail::uniform(rng, 0.05, 1.0);
      act.depth = detail::uniform(rng, 0.2, 0.8);
      act.widgets = detail::uniform(rng, 0.1, 0.9);
      act.image_area = detail::uniform(rng, 0.05, 0.8);
      act.primary_images = std::bernoulli_distribution(0.4)(rng);
      act.source_px = detail::uniform(rng, 500.0, 1200.0);
      act.animation_s = detail::uniform(rng, 0.1, 0.6);
      acts.push_back(act);
    }

    const int n_red =
        std::uniform_int_distribution<int>(opt.min_reductions, opt.max_reductions)(rng);
    for (int k = 0; k < n_red; ++k) {
      const auto kind = detail::draw_kind(rng, opt.anticorrelated);
      const auto& act = acts[static_cast<std::size_t>(k) % acts.size()];
      const int affected = std::uniform_int_distribution<int>(1, 8)(rng);
      auto [phi, w] = synthesize_reduction(kind, act, affected, 1, opt.anticorrelated);
      Reduction r;
      char rid[24];
      std::snprintf(rid, sizeof(rid), "r%02d", k);
      r.id = rid;
      r.app_id = app.id;
      r.kind = kind;
      r.views = {act.id};
      r.features = std::move(phi);
      r.savings = w;
      r.asset_refs = {"assets/" + app.id + "/" + act.id + "/original.png",
                      "assets/" + app.id + "/" + act.id + "/" + r.id + ".png"};

      const double u = std::clamp(theta.dot(r.features), 0.0, 1.0);
      for (int user = 0; user < opt.raters; ++user)
        corpus.dataset.surveys.push_back(SurveyRecord{app.id, r.id, act.id,
                                                      "u" + std::to_string(user),
                                                      simulate_rating(u, opt.rater_noise, rng)});
      app.reductions.push_back(std::move(r));
    }
    corpus.dataset.apps.push_back(std::move(app));
    corpus.app_weights.push_back(theta);
  }
  return corpus;
}

/// Ground-truth weights of a corpus: {"shared": [...], "apps": {id: [...]}}.
inline nlohmann::json truth_to_json(const SyntheticCorpus& corpus) {
  nlohmann::json apps = nlohmann::json::object();
  for (std::size_t i = 0; i < corpus.dataset.apps.size(); ++i)
    apps[corpus.dataset.apps[i].id] = detail::vector_json(corpus.app_weights[i]);
  return {{"schema_version", std::string(kSchemaVersion)},
          {"shared", detail::vector_json(corpus.shared_weights)},
          {"apps", apps}};
}

/// Weights for `app_id` from a truth document, falling back to the shared
/// weights when the app has no entry of its own.
inline WeightVector truth_weights(const nlohmann::json& doc, std::string_view app_id) {
  const detail::Reader root(doc, "");
  detail::check_version(root, "truth");
  const std::string key(app_id);
  const auto node = root.has("apps") && root.at("apps").has(key.c_str())
                        ? root.at("apps").at(key.c_str())
                        : root.at("shared");
  WeightVector w = detail::vector_from(node.numbers());
  if (w.size() != static_cast<Eigen::Index>(kFeatureDim))
    fail(ErrorCode::kDimension, "truth weights must have dimension " + std::to_string(kFeatureDim),
         node.pointer());
  return w;
}

}  // namespace redopt

#endif  // REDOPT_SYNTHETIC_HPP
