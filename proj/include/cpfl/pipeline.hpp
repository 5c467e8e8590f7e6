#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cpfl/embedding.hpp"
#include "cpfl/feature_filter.hpp"
#include "cpfl/geometry.hpp"
#include "cpfl/geometry_pose.hpp"
#include "cpfl/params.hpp"
#include "cpfl/visibility_filter.hpp"

namespace cpfl {

/// A query image as read from disk: raw descriptors and their pixels.
struct RawQuery {
  QueryId id = 0;
  int width = 0;
  int height = 0;
  std::vector<Vec2> pixels;
  DescriptorMatrix descriptors;
};

/// A query image whose descriptors have been encoded against a model.
struct Query {
  QueryId id = 0;
  int width = 0;
  int height = 0;
  std::vector<QueryFeature> features;
};

Query encode_query_image(const RawQuery& raw, const Vocabulary& vocab,
                         const EmbeddingParams& embedding);

enum class Status { kLocalized, kFailed };

enum class Stage { kNone, kFeature, kVisibility, kReconfiguration, kAuxiliary, kGeometry, kFinal };

std::string_view to_string(Status s);
std::string_view to_string(Stage s);

struct StageCounts {
  std::size_t candidates = 0;
  std::size_t matches = 0;         // |M|
  std::size_t confident = 0;       // |M_FC|
  std::size_t ranked_images = 0;
  std::size_t selected = 0;        // |VFC u VFC-I|
  std::size_t reconfigured = 0;
  std::size_t pool = 0;            // |M^{d(k1)}|
  std::size_t recovered = 0;
};

struct StageTimings {
  double feature_ms = 0.0;
  double visibility_ms = 0.0;
  double reconfiguration_ms = 0.0;
  double auxiliary_ms = 0.0;
  double geometry_ms = 0.0;
  double final_ms = 0.0;

  double total_ms() const {
    return feature_ms + visibility_ms + reconfiguration_ms + auxiliary_ms + geometry_ms + final_ms;
  }
};

struct LocalizationResult {
  QueryId query_id = 0;
  Status status = Status::kFailed;
  Stage failed_stage = Stage::kNone;
  CameraPose pose;
  std::size_t inlier_count = 0;
  StageCounts counts;
  StageTimings timings;
};

/// Intermediate sets of one localization, for inspection and tests.
struct LocalizationTrace {
  CandidateSet candidates;
  FeaturePartition features;
  VisibilityResult visibility;
  std::vector<Match> reconfigured;
  std::optional<AuxiliaryPose> auxiliary;
  std::vector<Match> recovered;
};

/// Runs the full cascade on one encoded query. Stage failures are reported in
/// the result, never thrown.
LocalizationResult localize(const Query& query, const CompressedModel& model,
                            const PipelineParams& params, std::uint64_t seed,
                            LocalizationTrace* trace = nullptr);

/// Localizes every query on a pool of `threads` workers. Query i uses seed
/// `seed + query.id`; results are returned ordered by query id.
std::vector<LocalizationResult> localize_all(std::span<const Query> queries,
                                             const CompressedModel& model,
                                             const PipelineParams& params, std::uint64_t seed,
                                             int threads = 1);

}  // namespace cpfl
