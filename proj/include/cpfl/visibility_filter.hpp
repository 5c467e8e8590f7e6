#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpfl/feature_filter.hpp"
#include "cpfl/params.hpp"
#include "cpfl/scene_model.hpp"

namespace cpfl {

struct ImageVote {
  ImageId image_id = 0;
  double score = 0.0;  // S(d)
  int vote_count = 0;  // locally unique FC votes
};

/// Minimum number of locally unique votes for an image to be ranked.
inline constexpr int kMinImageVotes = 3;

/// Votes database images with FC matches. Each query feature votes an image
/// at most once, with its highest-scoring match (ties: lower point id).
/// Images are ranked by S(d) = sum(E) / sqrt(|P^d|), ties by lower id.
std::vector<ImageVote> vote_images(std::span<const Match> confident, const VisibilityGraph& graph);

/// Matches whose point is observed in at least one of the first `top`
/// ranked images.
std::vector<Match> select_pool(std::span<const Match> matches, std::span<const ImageVote> ranking,
                               std::size_t top, const VisibilityGraph& graph);

struct ConfidenceSplit {
  std::vector<Match> vfc;
  std::vector<Match> vnfc;
};

/// Splits top-k visible matches into VFC (E >= alpha) and VNFC, setting flags.
ConfidenceSplit split_confidence(std::span<const Match> visible, double alpha);

struct Promotion {
  std::vector<Match> vnfc;    // every input VNFC match with E' recorded
  std::vector<Match> vfc_i;   // the subset with E' >= alpha
};

/// Co-visibility promotion of VNFC matches. For each top image d the counts
/// of VFC and VNFC matches it observes are taken; a VNFC match gains
/// alpha/2 * ln(1 + w_vfc / w_vnfc) from every top image that observes it.
Promotion promote_vnfc(std::span<const Match> vnfc, std::span<const Match> vfc,
                       std::span<const ImageVote> top_images, const VisibilityGraph& graph,
                       double alpha);

struct VisibilityResult {
  std::vector<ImageVote> ranking;
  std::vector<Match> visible;   // M^{d(k)}
  std::vector<Match> selected;  // VFC and VFC-I, ordered by (query, point)
  std::vector<Match> pool;      // M^{d(k1)}
  std::size_t vfc_count = 0;
  std::size_t vfc_i_count = 0;
};

/// Full visibility-wise filtering. In baseline-voting mode every top-k match
/// is selected without the two-step selection.
VisibilityResult run_visibility_filter(const FeaturePartition& features,
                                       const VisibilityGraph& graph, const PipelineParams& params);

}  // namespace cpfl
