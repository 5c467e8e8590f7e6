#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cpfl/embedding.hpp"
#include "cpfl/params.hpp"
#include "cpfl/types.hpp"

namespace cpfl {

/// A query-image local feature after word assignment and binarization.
/// Ids are dense: feature i of a query has id i.
struct QueryFeature {
  QueryId id = 0;
  Vec2 pixel = Vec2::Zero();  // origin top-left
  WordId word_id = 0;
  Signature signature;
};

enum MatchFlag : std::uint8_t {
  kFC = 1 << 0,    // feature-wise confident
  kVC = 1 << 1,    // seen in a top-k image
  kVFC = 1 << 2,   // VC and FC
  kVNFC = 1 << 3,  // VC but not FC
  kVFCI = 1 << 4,  // VNFC promoted by co-visibility
};

/// A 2D-3D match q <-> p with its feature-wise scores.
struct Match {
  QueryId query_id = 0;
  PointId point_id = 0;
  int hamming = 0;
  double t_image = 0.0;  // image-side ratio
  double t_model = 0.0;  // model-side ratio
  double ratio = 0.0;    // bilateral ratio T(m)
  double score = 0.0;    // E(m)
  double promoted_score = 0.0;  // E'(m); equals score unless promoted
  std::uint8_t flags = 0;

  bool has(MatchFlag f) const { return (flags & f) != 0; }
  std::pair<QueryId, PointId> key() const { return {query_id, point_id}; }
};

/// Candidate matches with their two neighborhoods: P(q), the points a query
/// feature matches, and Q(p), the query features a point matches.
class CandidateSet {
 public:
  CandidateSet() = default;

  /// Takes arbitrary (query, point, hamming) matches; reorders them by
  /// (query_id, point_id) and indexes both neighborhoods.
  static CandidateSet from_matches(std::vector<Match> matches);

  const std::vector<Match>& matches() const { return matches_; }
  std::size_t size() const { return matches_.size(); }

  /// Hamming distances over Q(p) for the point of match i.
  std::span<const int> image_side(std::size_t i) const;
  /// Hamming distances over P(q) for the query feature of match i.
  std::span<const int> model_side(std::size_t i) const;

 private:
  std::vector<Match> matches_;
  std::vector<int> by_query_;
  std::vector<int> by_point_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> query_range_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> point_range_;
};

/// All same-word (feature, entry) pairs with Hamming distance <= tau.
CandidateSet find_candidates(std::span<const QueryFeature> features,
                             const CompressedModel& model, int tau);

/// Piecewise Gaussian weight. The plateau covers 0 <= h <= sigma/2 unless
/// `literal_zero` is set, in which case h = 0 weighs 0.
double gaussian_weight(int h, double sigma, int tau, bool literal_zero = false);

struct RatioTest {
  double t_image = 0.0;
  double t_model = 0.0;
  double ratio = 0.0;
};

/// Bilateral Hamming ratio test for a match at distance h. Both
/// neighborhoods include the match itself; h = 0 is clamped to 1 in the
/// denominators.
RatioTest bilateral_ratio_test(int h, std::span<const int> image_side,
                               std::span<const int> model_side, double phi);

struct FeaturePartition {
  std::vector<Match> pool;       // M: E > 0
  std::vector<Match> confident;  // M_FC: E >= alpha
};

FeaturePartition score_and_partition(const CandidateSet& candidates, const PipelineParams& params);

/// Baseline scoring: E = w(h) with the fixed baseline threshold and no ratio test.
FeaturePartition score_baseline(const CandidateSet& candidates, const PipelineParams& params);

}  // namespace cpfl
