#include "cpfl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

namespace cpfl {

namespace {

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

Query encode_query_image(const RawQuery& raw, const Vocabulary& vocab,
                         const EmbeddingParams& embedding) {
  if (raw.pixels.size() != static_cast<std::size_t>(raw.descriptors.rows())) {
    throw ValidationError("query " + std::to_string(raw.id) +
                          ": pixel and descriptor counts differ");
  }
  if (raw.width <= 0 || raw.height <= 0) {
    throw ValidationError("query " + std::to_string(raw.id) + ": image size must be positive");
  }
  Query q;
  q.id = raw.id;
  q.width = raw.width;
  q.height = raw.height;
  q.features.reserve(raw.pixels.size());
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    const Vec2& px = raw.pixels[i];
    if (!(px.x() >= 0.0 && px.x() < raw.width && px.y() >= 0.0 && px.y() < raw.height)) {
      throw ValidationError("query " + std::to_string(raw.id) + ": feature " + std::to_string(i) +
                            " lies outside the image");
    }
    const auto row = static_cast<Eigen::Index>(i);
    const EncodedDescriptor enc = encode_query(
        {raw.descriptors.row(row).data(), static_cast<std::size_t>(raw.descriptors.cols())}, vocab,
        embedding);
    q.features.push_back({static_cast<QueryId>(i), px, enc.word, enc.signature});
  }
  return q;
}

std::string_view to_string(Status s) {
  return s == Status::kLocalized ? "localized" : "failed";
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kNone: return "none";
    case Stage::kFeature: return "feature";
    case Stage::kVisibility: return "visibility";
    case Stage::kReconfiguration: return "reconfiguration";
    case Stage::kAuxiliary: return "auxiliary";
    case Stage::kGeometry: return "geometry";
    case Stage::kFinal: return "final";
  }
  return "unknown";
}

LocalizationResult localize(const Query& query, const CompressedModel& model,
                            const PipelineParams& params, std::uint64_t seed,
                            LocalizationTrace* trace) {
  params.validate();
  LocalizationResult result;
  result.query_id = query.id;
  StopWatch watch;
  auto fail = [&](Stage stage) {
    result.status = Status::kFailed;
    result.failed_stage = stage;
    return result;
  };

  CandidateSet candidates =
      find_candidates(query.features, model, params.baseline_voting ? params.baseline_tau : params.tau);
  FeaturePartition features = params.baseline_voting ? score_baseline(candidates, params)
                                                     : score_and_partition(candidates, params);
  result.counts.candidates = candidates.size();
  result.counts.matches = features.pool.size();
  result.counts.confident = features.confident.size();
  result.timings.feature_ms = watch.lap_ms();
  if (trace) {
    trace->candidates = std::move(candidates);
    trace->features = features;
  }
  if (features.pool.empty() || features.confident.empty()) return fail(Stage::kFeature);

  VisibilityResult visibility = run_visibility_filter(features, model.graph, params);
  result.counts.ranked_images = visibility.ranking.size();
  result.counts.selected = visibility.selected.size();
  result.counts.pool = visibility.pool.size();
  result.timings.visibility_ms = watch.lap_ms();
  const std::size_t minimal = params.known_focal ? 3 : 4;
  const bool visibility_ok = !visibility.ranking.empty() && visibility.selected.size() >= minimal;
  if (trace) trace->visibility = visibility;
  if (!visibility_ok) return fail(Stage::kVisibility);

  std::vector<Match> reconfigured =
      spatial_reconfigure(visibility.selected, query.features, query.width, query.height,
                          params.spatial_budget, params.beta, params.quality_aware_reconfiguration);
  result.counts.reconfigured = reconfigured.size();
  result.timings.reconfiguration_ms = watch.lap_ms();
  if (trace) trace->reconfigured = reconfigured;
  if (reconfigured.size() < minimal) return fail(Stage::kReconfiguration);

  const std::vector<Correspondence> aux_corrs =
      make_correspondences(reconfigured, query.features, model.points);
  std::optional<AuxiliaryPose> aux =
      estimate_auxiliary_pose(aux_corrs, params, query.width, query.height, mix_seed(seed, 1));
  result.timings.auxiliary_ms = watch.lap_ms();
  if (trace) trace->auxiliary = aux;
  if (!aux) return fail(Stage::kAuxiliary);

  std::vector<Match> recovered =
      geometry_filter(visibility.pool, query.features, model.points, aux->pose, params.theta);
  result.counts.recovered = recovered.size();
  result.timings.geometry_ms = watch.lap_ms();
  if (trace) trace->recovered = recovered;
  if (recovered.size() < 3) return fail(Stage::kGeometry);

  const std::vector<Correspondence> final_corrs =
      make_correspondences(recovered, query.features, model.points);
  const double focal = params.known_focal ? *params.known_focal : aux->pose.focal;
  FinalPose final_pose =
      estimate_final_pose(final_corrs, focal, params, query.width, query.height, mix_seed(seed, 2));
  result.timings.final_ms = watch.lap_ms();
  result.inlier_count = final_pose.inlier_count;
  if (final_pose.has_pose) result.pose = final_pose.pose;
  if (!final_pose.localized) return fail(Stage::kFinal);

  result.status = Status::kLocalized;
  result.failed_stage = Stage::kNone;
  return result;
}

std::vector<LocalizationResult> localize_all(std::span<const Query> queries,
                                             const CompressedModel& model,
                                             const PipelineParams& params, std::uint64_t seed,
                                             int threads) {
  params.validate();
  std::vector<LocalizationResult> results(queries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      results[i] = localize(queries[i], model, params, seed + queries[i].id);
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(queries.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const LocalizationResult& a, const LocalizationResult& b) {
                     return a.query_id < b.query_id;
                   });
  return results;
}

}  // namespace cpfl
