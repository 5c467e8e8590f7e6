#include "cpfl/feature_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cpfl {

CandidateSet CandidateSet::from_matches(std::vector<Match> matches) {
  CandidateSet set;
  std::sort(matches.begin(), matches.end(),
            [](const Match& a, const Match& b) { return a.key() < b.key(); });
  set.matches_ = std::move(matches);
  const std::size_t n = set.matches_.size();

  set.by_query_.resize(n);
  set.query_range_.resize(n);
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin;
    while (end < n && set.matches_[end].query_id == set.matches_[begin].query_id) {
      set.by_query_[end] = set.matches_[end].hamming;
      ++end;
    }
    for (std::size_t i = begin; i < end; ++i) {
      set.query_range_[i] = {static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)};
    }
    begin = end;
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return set.matches_[a].point_id < set.matches_[b].point_id;
  });
  set.by_point_.resize(n);
  set.point_range_.resize(n);
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin;
    const PointId p = set.matches_[order[begin]].point_id;
    while (end < n && set.matches_[order[end]].point_id == p) {
      set.by_point_[end] = set.matches_[order[end]].hamming;
      ++end;
    }
    for (std::size_t i = begin; i < end; ++i) {
      set.point_range_[order[i]] = {static_cast<std::uint32_t>(begin),
                                    static_cast<std::uint32_t>(end)};
    }
    begin = end;
  }
  return set;
}

std::span<const int> CandidateSet::image_side(std::size_t i) const {
  const auto [b, e] = point_range_.at(i);
  return {by_point_.data() + b, by_point_.data() + e};
}

std::span<const int> CandidateSet::model_side(std::size_t i) const {
  const auto [b, e] = query_range_.at(i);
  return {by_query_.data() + b, by_query_.data() + e};
}

CandidateSet find_candidates(std::span<const QueryFeature> features,
                             const CompressedModel& model, int tau) {
  std::vector<Match> matches;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const QueryFeature& f = features[i];
    if (f.id != i) throw ValidationError("query feature ids must be dense and ordered");
    for (std::uint32_t e : model.posting(f.word_id)) {
      const ModelEntry& entry = model.entries[e];
      const int h = hamming_distance(f.signature, entry.signature);
      if (h <= tau) {
        Match m;
        m.query_id = f.id;
        m.point_id = entry.point_id;
        m.hamming = h;
        matches.push_back(m);
      }
    }
  }
  return CandidateSet::from_matches(std::move(matches));
}

double gaussian_weight(int h, double sigma, int tau, bool literal_zero) {
  if (h < 0) throw std::invalid_argument("gaussian_weight: negative Hamming distance");
  if (h > tau) return 0.0;
  if (h == 0 && literal_zero) return 0.0;
  if (h <= 0.5 * sigma) return 4.0 * std::exp(-0.25);
  const double inv = sigma / h;
  const double rel = h / sigma;
  return inv * inv * std::exp(-rel * rel);
}

RatioTest bilateral_ratio_test(int h, std::span<const int> image_side,
                               std::span<const int> model_side, double phi) {
  if (image_side.empty() || model_side.empty()) {
    throw std::invalid_argument("bilateral_ratio_test: the match must belong to both neighborhoods");
  }
  const double hc = std::max(h, 1);
  const double n_image = static_cast<double>(image_side.size());
  const double n_model = static_cast<double>(model_side.size());
  const double sum_image = std::accumulate(image_side.begin(), image_side.end(), 0.0);
  const double sum_model = std::accumulate(model_side.begin(), model_side.end(), 0.0);

  RatioTest out;
  out.t_image = sum_image / (hc * n_image * n_image);
  out.t_model = sum_model / (hc * n_model);
  out.ratio = out.t_image >= phi ? out.t_model : 0.0;
  return out;
}

namespace {

FeaturePartition partition(std::vector<Match> scored, double alpha) {
  FeaturePartition out;
  for (Match& m : scored) {
    m.promoted_score = m.score;
    if (m.score <= 0.0) continue;
    if (m.score >= alpha) {
      m.flags |= kFC;
      out.confident.push_back(m);
    }
    out.pool.push_back(m);
  }
  return out;
}

}  // namespace

FeaturePartition score_and_partition(const CandidateSet& candidates, const PipelineParams& params) {
  std::vector<Match> scored = candidates.matches();
  for (std::size_t i = 0; i < scored.size(); ++i) {
    Match& m = scored[i];
    const RatioTest rt = bilateral_ratio_test(m.hamming, candidates.image_side(i),
                                              candidates.model_side(i), params.phi);
    m.t_image = rt.t_image;
    m.t_model = rt.t_model;
    m.ratio = rt.ratio;
    m.score = rt.ratio *
              gaussian_weight(m.hamming, params.sigma, params.tau, params.literal_zero_weight);
  }
  return partition(std::move(scored), params.alpha);
}

FeaturePartition score_baseline(const CandidateSet& candidates, const PipelineParams& params) {
  std::vector<Match> scored = candidates.matches();
  for (Match& m : scored) {
    m.ratio = 1.0;
    m.score = gaussian_weight(m.hamming, params.sigma, params.baseline_tau,
                              params.literal_zero_weight);
  }
  return partition(std::move(scored), params.alpha);
}

}  // namespace cpfl
