#include "cpfl/visibility_filter.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace cpfl {

std::vector<ImageVote> vote_images(std::span<const Match> confident, const VisibilityGraph& graph) {
  struct Vote {
    ImageId image;
    QueryId query;
    double score;
    PointId point;
  };
  std::vector<Vote> votes;
  for (const Match& m : confident) {
    for (ImageId d : graph.images_of_point(m.point_id)) {
      votes.push_back({d, m.query_id, m.score, m.point_id});
    }
  }
  std::sort(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) {
    return std::tie(a.image, a.query, b.score, a.point) <
           std::tie(b.image, b.query, a.score, b.point);
  });

  std::vector<ImageVote> ranking;
  for (std::size_t i = 0; i < votes.size();) {
    const ImageId d = votes[i].image;
    double sum = 0.0;
    int count = 0;
    QueryId last_query = 0;
    bool first = true;
    for (; i < votes.size() && votes[i].image == d; ++i) {
      if (!first && votes[i].query == last_query) continue;
      first = false;
      last_query = votes[i].query;
      sum += votes[i].score;
      ++count;
    }
    if (count < kMinImageVotes) continue;
    const double observed = static_cast<double>(graph.points_of_image(d).size());
    ranking.push_back({d, sum / std::sqrt(observed), count});
  }
  std::sort(ranking.begin(), ranking.end(), [](const ImageVote& a, const ImageVote& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  });
  return ranking;
}

std::vector<Match> select_pool(std::span<const Match> matches, std::span<const ImageVote> ranking,
                               std::size_t top, const VisibilityGraph& graph) {
  std::vector<char> in_top(graph.num_images(), 0);
  const std::size_t n = std::min(top, ranking.size());
  for (std::size_t r = 0; r < n; ++r) in_top[ranking[r].image_id] = 1;

  std::vector<Match> out;
  for (const Match& m : matches) {
    const auto images = graph.images_of_point(m.point_id);
    if (std::any_of(images.begin(), images.end(), [&](ImageId d) { return in_top[d] != 0; })) {
      out.push_back(m);
    }
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) { return a.key() < b.key(); });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Match& a, const Match& b) { return a.key() == b.key(); }),
            out.end());
  return out;
}

ConfidenceSplit split_confidence(std::span<const Match> visible, double alpha) {
  ConfidenceSplit split;
  for (Match m : visible) {
    m.flags |= kVC;
    if (m.score >= alpha) {
      m.flags |= kVFC;
      split.vfc.push_back(m);
    } else {
      m.flags |= kVNFC;
      split.vnfc.push_back(m);
    }
  }
  return split;
}

Promotion promote_vnfc(std::span<const Match> vnfc, std::span<const Match> vfc,
                       std::span<const ImageVote> top_images, const VisibilityGraph& graph,
                       double alpha) {
  // slot[d] = position of image d in top_images, or -1.
  std::vector<int> slot(graph.num_images(), -1);
  for (std::size_t r = 0; r < top_images.size(); ++r) {
    slot[top_images[r].image_id] = static_cast<int>(r);
  }
  std::vector<int> omega_vfc(top_images.size(), 0);
  std::vector<int> omega_vnfc(top_images.size(), 0);
  auto count = [&](std::span<const Match> set, std::vector<int>& omega) {
    for (const Match& m : set) {
      for (ImageId d : graph.images_of_point(m.point_id)) {
        if (slot[d] >= 0) ++omega[static_cast<std::size_t>(slot[d])];
      }
    }
  };
  count(vfc, omega_vfc);
  count(vnfc, omega_vnfc);

  Promotion out;
  out.vnfc.reserve(vnfc.size());
  for (Match m : vnfc) {
    double promoted = m.score;
    for (ImageId d : graph.images_of_point(m.point_id)) {
      if (slot[d] < 0) continue;
      const auto r = static_cast<std::size_t>(slot[d]);
      if (omega_vnfc[r] == 0) continue;
      promoted += 0.5 * alpha *
                  std::log1p(static_cast<double>(omega_vfc[r]) / static_cast<double>(omega_vnfc[r]));
    }
    m.promoted_score = promoted;
    if (promoted >= alpha) {
      m.flags |= kVFCI;
      out.vfc_i.push_back(m);
    }
    out.vnfc.push_back(m);
  }
  return out;
}

VisibilityResult run_visibility_filter(const FeaturePartition& features,
                                       const VisibilityGraph& graph, const PipelineParams& params) {
  VisibilityResult out;
  out.ranking = vote_images(features.confident, graph);
  if (out.ranking.empty()) return out;

  const auto k = static_cast<std::size_t>(params.k);
  const auto k1 = static_cast<std::size_t>(params.k1);
  out.pool = select_pool(features.pool, out.ranking, k1, graph);
  out.visible = select_pool(features.pool, out.ranking, k, graph);

  if (params.baseline_voting) {
    for (Match& m : out.visible) m.flags |= kVC;
    out.selected = out.visible;
    out.vfc_count = out.selected.size();
    return out;
  }

  ConfidenceSplit split = split_confidence(out.visible, params.alpha);
  const std::span<const ImageVote> top(out.ranking.data(), std::min(k, out.ranking.size()));
  Promotion promotion = promote_vnfc(split.vnfc, split.vfc, top, graph, params.alpha);

  out.vfc_count = split.vfc.size();
  out.vfc_i_count = promotion.vfc_i.size();

  // Carry flags and promoted scores back onto M^{d(k)}.
  out.visible = std::move(split.vfc);
  out.visible.insert(out.visible.end(), promotion.vnfc.begin(), promotion.vnfc.end());
  std::sort(out.visible.begin(), out.visible.end(),
            [](const Match& a, const Match& b) { return a.key() < b.key(); });
  for (const Match& m : out.visible) {
    if (m.has(kVFC) || m.has(kVFCI)) out.selected.push_back(m);
  }
  return out;
}

}  // namespace cpfl
