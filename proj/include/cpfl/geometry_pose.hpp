#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cpfl/feature_filter.hpp"
#include "cpfl/params.hpp"
#include "cpfl/pose_solvers.hpp"
#include "cpfl/scene_model.hpp"

namespace cpfl {

/// 4 x 4 partition of the query image used by spatial reconfiguration.
struct BinGrid {
  static constexpr int kRows = 4;
  static constexpr int kCols = 4;
  static constexpr int kBins = kRows * kCols;

  std::array<int, kBins> counts{};
  std::array<int, kBins> quotas{};

  static int bin_of(const Vec2& pixel, int width, int height);
};

/// Per-bin share R_b = sqrt(N_b) / sum_i sqrt(N_i); zero for empty bins.
std::array<double, BinGrid::kBins> bin_shares(const std::array<int, BinGrid::kBins>& counts);

/// Largest-remainder apportionment of R_b * budget; remainders tie to the
/// lower bin index.
BinGrid apportion_quotas(const std::array<int, BinGrid::kBins>& counts, int budget);

/// Quality-aware spatial reconfiguration of the selected (VFC and VFC-I)
/// matches. VFC-I matches are those flagged kVFCI; everything else counts as
/// VFC. With `quality_aware` false the same number of VFC and VFC-I matches
/// is taken by score alone.
std::vector<Match> spatial_reconfigure(std::span<const Match> selected,
                                       std::span<const QueryFeature> features, int width,
                                       int height, int budget, double beta,
                                       bool quality_aware = true);

/// Builds solver-ready correspondences from matches.
std::vector<Correspondence> make_correspondences(std::span<const Match> matches,
                                                 std::span<const QueryFeature> features,
                                                 std::span<const Point3D> points);

struct PoseHypothesis {
  CameraPose pose;
  std::vector<std::uint32_t> inlier_ids;  // indices into the correspondence list

  std::size_t inlier_count() const { return inlier_ids.size(); }
};

std::vector<std::uint32_t> find_inliers(const CameraPose& pose,
                                        std::span<const Correspondence> corrs, double threshold);

/// Keeps at most `capacity` hypotheses whose inlier count exceeds
/// `ratio * epsilon`, epsilon being the best count offered so far. When full,
/// the lowest count leaves first, and among equal counts the newest.
class HypothesisStore {
 public:
  explicit HypothesisStore(std::size_t capacity = 10, double ratio = 0.7)
      : capacity_(capacity), ratio_(ratio) {}

  void offer(PoseHypothesis hypothesis);

  std::size_t epsilon() const { return epsilon_; }
  std::size_t size() const { return stored_.size(); }
  bool empty() const { return stored_.empty(); }

  /// Stored hypotheses in insertion order.
  std::vector<const PoseHypothesis*> hypotheses() const;

  /// Hypothesis whose focal is the median of the stored focals (lower middle
  /// for even counts, equal focals ordered by insertion).
  const PoseHypothesis* principal() const;

  /// Largest inlier count, earliest inserted among ties.
  const PoseHypothesis* max_inlier() const;

 private:
  struct Entry {
    PoseHypothesis hypothesis;
    std::uint64_t order = 0;
  };
  std::size_t capacity_;
  double ratio_;
  std::size_t epsilon_ = 0;
  std::uint64_t next_order_ = 0;
  std::vector<Entry> stored_;
};

struct AuxiliaryPose {
  CameraPose pose;  // pose.focal is the principal focal length
  std::size_t max_inliers = 0;
  std::vector<PoseHypothesis> stored;
};

/// RANSAC with P4P (or P3P when the focal is known) over the reconfigured
/// matches. Inliers are counted at the final threshold. Returns nullopt when
/// fewer than a minimal sample is available or epsilon < 4.
std::optional<AuxiliaryPose> estimate_auxiliary_pose(std::span<const Correspondence> corrs,
                                                     const PipelineParams& params, int width,
                                                     int height, std::uint64_t seed);

/// Pool matches whose reprojection under the auxiliary pose is within theta.
std::vector<Match> geometry_filter(std::span<const Match> pool,
                                   std::span<const QueryFeature> features,
                                   std::span<const Point3D> points, const CameraPose& aux_pose,
                                   double theta);

struct FinalPose {
  bool localized = false;
  bool has_pose = false;
  CameraPose pose;
  std::size_t inlier_count = 0;
  std::vector<std::uint32_t> inlier_ids;
};

/// RANSAC with P3P at a fixed focal length; localized iff the best hypothesis
/// has at least min_inliers inliers.
FinalPose estimate_final_pose(std::span<const Correspondence> corrs, double focal,
                              const PipelineParams& params, int width, int height,
                              std::uint64_t seed);

}  // namespace cpfl
