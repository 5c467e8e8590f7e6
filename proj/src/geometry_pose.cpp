#include "cpfl/geometry_pose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

namespace cpfl {

namespace {

bool by_score_desc(const Match& a, const Match& b) {
  return std::tie(b.score, a.query_id, a.point_id) < std::tie(a.score, b.query_id, b.point_id);
}

bool by_promoted_desc(const Match& a, const Match& b) {
  return std::tie(b.promoted_score, a.query_id, a.point_id) <
         std::tie(a.promoted_score, b.query_id, b.point_id);
}

std::size_t inferred_cap(double beta, std::size_t primary) {
  return static_cast<std::size_t>(std::floor(beta * static_cast<double>(primary) + 1e-9));
}

// Uniform minimal samples without replacement, rejecting repeated query
// features, repeated points and collinear point triples.
class MinimalSampler {
 public:
  MinimalSampler(std::span<const Correspondence> corrs, std::uint64_t seed)
      : corrs_(corrs), rng_(seed) {}

  bool draw(std::size_t size, std::array<Correspondence, 4>& out) {
    if (corrs_.size() < size) return false;
    std::uniform_int_distribution<std::size_t> pick(0, corrs_.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::array<std::size_t, 4> idx{};
      bool ok = true;
      for (std::size_t s = 0; s < size && ok; ++s) {
        idx[s] = pick(rng_);
        for (std::size_t t = 0; t < s; ++t) {
          const Correspondence& a = corrs_[idx[s]];
          const Correspondence& b = corrs_[idx[t]];
          if (idx[s] == idx[t] || a.query_id == b.query_id || a.point_id == b.point_id) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;
      for (std::size_t i = 0; i < size && ok; ++i) {
        for (std::size_t j = i + 1; j < size && ok; ++j) {
          for (std::size_t k = j + 1; k < size && ok; ++k) {
            ok = !is_collinear(corrs_[idx[i]].point, corrs_[idx[j]].point, corrs_[idx[k]].point);
          }
        }
      }
      if (!ok) continue;
      for (std::size_t s = 0; s < size; ++s) out[s] = corrs_[idx[s]];
      return true;
    }
    return false;
  }

 private:
  std::span<const Correspondence> corrs_;
  std::mt19937_64 rng_;
};

}  // namespace

int BinGrid::bin_of(const Vec2& pixel, int width, int height) {
  const int col = std::clamp(static_cast<int>(std::floor(pixel.x() * kCols / width)), 0, kCols - 1);
  const int row = std::clamp(static_cast<int>(std::floor(pixel.y() * kRows / height)), 0, kRows - 1);
  return row * kCols + col;
}

std::array<double, BinGrid::kBins> bin_shares(const std::array<int, BinGrid::kBins>& counts) {
  std::array<double, BinGrid::kBins> shares{};
  double total = 0.0;
  for (int c : counts) total += std::sqrt(static_cast<double>(c));
  if (total == 0.0) return shares;
  for (int b = 0; b < BinGrid::kBins; ++b) {
    shares[static_cast<std::size_t>(b)] = std::sqrt(static_cast<double>(counts[static_cast<std::size_t>(b)])) / total;
  }
  return shares;
}

BinGrid apportion_quotas(const std::array<int, BinGrid::kBins>& counts, int budget) {
  BinGrid grid;
  grid.counts = counts;
  const auto shares = bin_shares(counts);
  std::array<double, BinGrid::kBins> remainder{};
  int assigned = 0;
  bool any = false;
  for (std::size_t b = 0; b < shares.size(); ++b) {
    if (counts[b] <= 0) continue;
    any = true;
    const double exact = shares[b] * budget;
    grid.quotas[b] = static_cast<int>(std::floor(exact));
    remainder[b] = exact - grid.quotas[b];
    assigned += grid.quotas[b];
  }
  if (!any) return grid;
  std::array<int, BinGrid::kBins> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
  });
  for (int i = 0; assigned < budget; i = (i + 1) % BinGrid::kBins) {
    const auto b = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    if (counts[b] <= 0) continue;
    ++grid.quotas[b];
    ++assigned;
  }
  return grid;
}

std::vector<Match> spatial_reconfigure(std::span<const Match> selected,
                                       std::span<const QueryFeature> features, int width,
                                       int height, int budget, double beta, bool quality_aware) {
  std::vector<Match> all(selected.begin(), selected.end());
  if (all.size() < 4) return all;

  std::array<int, BinGrid::kBins> counts{};
  std::vector<int> bin(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    bin[i] = BinGrid::bin_of(features[all[i].query_id].pixel, width, height);
    ++counts[static_cast<std::size_t>(bin[i])];
  }
  const BinGrid grid = apportion_quotas(counts, budget);

  // Per-bin candidate lists, best first.
  std::array<std::vector<std::size_t>, BinGrid::kBins> primary;
  std::array<std::vector<std::size_t>, BinGrid::kBins> inferred;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& list = all[i].has(kVFCI) ? inferred : primary;
    list[static_cast<std::size_t>(bin[i])].push_back(i);
  }
  for (auto& list : primary) {
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) { return by_score_desc(all[a], all[b]); });
  }
  for (auto& list : inferred) {
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) { return by_promoted_desc(all[a], all[b]); });
  }

  std::vector<char> chosen(all.size(), 0);
  std::size_t n_primary = 0;
  std::size_t n_inferred = 0;
  std::array<int, BinGrid::kBins> taken{};

  for (std::size_t b = 0; b < primary.size(); ++b) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(grid.quotas[b]), primary[b].size());
    for (std::size_t i = 0; i < n; ++i) chosen[primary[b][i]] = 1;
    taken[b] = static_cast<int>(n);
    n_primary += n;
  }

  std::vector<std::size_t> fill;
  for (std::size_t b = 0; b < inferred.size(); ++b) {
    const std::size_t room = static_cast<std::size_t>(grid.quotas[b] - taken[b]);
    const std::size_t n = std::min(room, inferred[b].size());
    fill.insert(fill.end(), inferred[b].begin(), inferred[b].begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(fill.begin(), fill.end(), [&](std::size_t a, std::size_t b) { return by_promoted_desc(all[a], all[b]); });
  for (std::size_t i : fill) {
    if (n_inferred >= inferred_cap(beta, n_primary)) break;
    chosen[i] = 1;
    ++n_inferred;
  }

  // One redistribution pass of unused budget in global score order.
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!chosen[i]) rest.push_back(i);
  }
  std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return by_promoted_desc(all[a], all[b]); });
  for (std::size_t i : rest) {
    if (n_primary + n_inferred >= static_cast<std::size_t>(budget)) break;
    if (!all[i].has(kVFCI)) {
      chosen[i] = 1;
      ++n_primary;
    } else if (n_inferred < inferred_cap(beta, n_primary)) {
      chosen[i] = 1;
      ++n_inferred;
    }
  }

  if (!quality_aware) {
    // Same composition, chosen purely by score.
    std::fill(chosen.begin(), chosen.end(), 0);
    std::vector<std::size_t> p;
    std::vector<std::size_t> q;
    for (std::size_t i = 0; i < all.size(); ++i) (all[i].has(kVFCI) ? q : p).push_back(i);
    std::sort(p.begin(), p.end(), [&](std::size_t a, std::size_t b) { return by_score_desc(all[a], all[b]); });
    std::sort(q.begin(), q.end(), [&](std::size_t a, std::size_t b) { return by_promoted_desc(all[a], all[b]); });
    for (std::size_t i = 0; i < n_primary; ++i) chosen[p[i]] = 1;
    for (std::size_t i = 0; i < n_inferred; ++i) chosen[q[i]] = 1;
  }

  std::vector<Match> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (chosen[i]) out.push_back(all[i]);
  }
  return out;
}

std::vector<Correspondence> make_correspondences(std::span<const Match> matches,
                                                 std::span<const QueryFeature> features,
                                                 std::span<const Point3D> points) {
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (const Match& m : matches) {
    out.push_back({points[m.point_id].position, features[m.query_id].pixel, m.query_id, m.point_id});
  }
  return out;
}

std::vector<std::uint32_t> find_inliers(const CameraPose& pose,
                                        std::span<const Correspondence> corrs, double threshold) {
  std::vector<std::uint32_t> inliers;
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 c = pose.to_camera(corrs[i].point);
    if (!(c.z() > 0.0)) continue;
    const Vec2 d = pose.focal * Vec2(c.x() / c.z(), c.y() / c.z()) + pose.principal_point - corrs[i].pixel;
    if (d.squaredNorm() <= t2) inliers.push_back(static_cast<std::uint32_t>(i));
  }
  return inliers;
}

void HypothesisStore::offer(PoseHypothesis hypothesis) {
  const std::size_t count = hypothesis.inlier_count();
  if (count > epsilon_) {
    epsilon_ = count;
    const double floor = ratio_ * static_cast<double>(epsilon_);
    std::erase_if(stored_, [&](const Entry& e) {
      return !(static_cast<double>(e.hypothesis.inlier_count()) > floor);
    });
  }
  if (!(static_cast<double>(count) > ratio_ * static_cast<double>(epsilon_))) return;
  stored_.push_back({std::move(hypothesis), next_order_++});
  if (stored_.size() <= capacity_) return;
  auto worst = std::min_element(stored_.begin(), stored_.end(), [](const Entry& a, const Entry& b) {
    if (a.hypothesis.inlier_count() != b.hypothesis.inlier_count()) {
      return a.hypothesis.inlier_count() < b.hypothesis.inlier_count();
    }
    return a.order > b.order;
  });
  stored_.erase(worst);
}

std::vector<const PoseHypothesis*> HypothesisStore::hypotheses() const {
  std::vector<const PoseHypothesis*> out;
  for (const Entry& e : stored_) out.push_back(&e.hypothesis);
  return out;
}

const PoseHypothesis* HypothesisStore::principal() const {
  if (stored_.empty()) return nullptr;
  std::vector<const Entry*> sorted;
  for (const Entry& e : stored_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const Entry* a, const Entry* b) {
    if (a->hypothesis.pose.focal != b->hypothesis.pose.focal) {
      return a->hypothesis.pose.focal < b->hypothesis.pose.focal;
    }
    return a->order < b->order;
  });
  return &sorted[(sorted.size() - 1) / 2]->hypothesis;
}

const PoseHypothesis* HypothesisStore::max_inlier() const {
  const Entry* best = nullptr;
  for (const Entry& e : stored_) {
    if (!best || e.hypothesis.inlier_count() > best->hypothesis.inlier_count() ||
        (e.hypothesis.inlier_count() == best->hypothesis.inlier_count() && e.order < best->order)) {
      best = &e;
    }
  }
  return best ? &best->hypothesis : nullptr;
}

std::optional<AuxiliaryPose> estimate_auxiliary_pose(std::span<const Correspondence> corrs,
                                                     const PipelineParams& params, int width,
                                                     int height, std::uint64_t seed) {
  const bool known = params.known_focal.has_value();
  const std::size_t sample_size = known ? 3 : 4;
  if (corrs.size() < sample_size) return std::nullopt;

  const Vec2 pp(0.5 * width, 0.5 * height);
  const FocalSearchOptions search = FocalSearchOptions::for_image(width, height);
  MinimalSampler sampler(corrs, seed);
  HypothesisStore store;
  std::array<Correspondence, 4> sample;
  for (int it = 0; it < params.aux_iterations; ++it) {
    if (!sampler.draw(sample_size, sample)) continue;
    const std::vector<CameraPose> poses =
        known ? p3p_solve(std::span<const Correspondence, 3>(sample.data(), 3), *params.known_focal, pp)
              : p4p_solve(std::span<const Correspondence, 4>(sample.data(), 4), pp, search);
    for (const CameraPose& pose : poses) {
      store.offer({pose, find_inliers(pose, corrs, params.final_threshold)});
    }
  }
  if (store.epsilon() < 4) return std::nullopt;

  const PoseHypothesis* chosen =
      (known || !params.principal_focal) ? store.max_inlier() : store.principal();
  AuxiliaryPose out;
  out.pose = chosen->pose;
  out.max_inliers = store.epsilon();
  for (const PoseHypothesis* h : store.hypotheses()) out.stored.push_back(*h);
  return out;
}

std::vector<Match> geometry_filter(std::span<const Match> pool,
                                   std::span<const QueryFeature> features,
                                   std::span<const Point3D> points, const CameraPose& aux_pose,
                                   double theta) {
  std::vector<Match> out;
  for (const Match& m : pool) {
    if (reprojection_error(aux_pose, points[m.point_id].position, features[m.query_id].pixel) <= theta) {
      out.push_back(m);
    }
  }
  return out;
}

FinalPose estimate_final_pose(std::span<const Correspondence> corrs, double focal,
                              const PipelineParams& params, int width, int height,
                              std::uint64_t seed) {
  FinalPose out;
  if (corrs.size() < 3) return out;
  const Vec2 pp(0.5 * width, 0.5 * height);
  MinimalSampler sampler(corrs, seed);
  std::array<Correspondence, 4> sample;
  for (int it = 0; it < params.final_iterations; ++it) {
    if (!sampler.draw(3, sample)) continue;
    for (const CameraPose& pose : p3p_solve(std::span<const Correspondence, 3>(sample.data(), 3), focal, pp)) {
      std::vector<std::uint32_t> inliers = find_inliers(pose, corrs, params.final_threshold);
      if (!out.has_pose || inliers.size() > out.inlier_count) {
        out.has_pose = true;
        out.pose = pose;
        out.inlier_count = inliers.size();
        out.inlier_ids = std::move(inliers);
      }
    }
  }
  out.localized = out.has_pose && out.inlier_count >= static_cast<std::size_t>(params.min_inliers);
  return out;
}

}  // namespace cpfl
