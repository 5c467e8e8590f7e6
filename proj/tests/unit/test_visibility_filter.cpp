#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cpfl/visibility_filter.hpp"
#include "support/oracles.hpp"

using namespace cpfl;

namespace {

Match fc(QueryId q, PointId p, double e) {
  Match m;
  m.query_id = q;
  m.point_id = p;
  m.score = e;
  m.promoted_score = e;
  return m;
}

// Image 0 observes points [0, n); more images are given explicitly.
VisibilityGraph graph_of(std::size_t num_points, std::vector<std::vector<PointId>> images) {
  std::vector<std::pair<PointId, ImageId>> edges;
  for (std::size_t d = 0; d < images.size(); ++d) {
    for (PointId p : images[d]) edges.push_back({p, static_cast<ImageId>(d)});
  }
  return VisibilityGraph::from_edges(num_points, images.size(), edges);
}

std::vector<PointId> range(PointId begin, PointId end) {
  std::vector<PointId> out;
  for (PointId p = begin; p < end; ++p) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("image score from three locally unique votes") {
  const VisibilityGraph g = graph_of(100, {range(0, 100)});
  const std::vector<Match> m{fc(0, 0, 2.0), fc(1, 1, 1.5), fc(2, 2, 0.5)};
  const auto ranking = vote_images(m, g);
  REQUIRE(ranking.size() == 1);
  CHECK(ranking[0].score == doctest::Approx(0.4));
  CHECK(ranking[0].vote_count == 3);
}

TEST_CASE("two votes do not rank an image") {
  const VisibilityGraph g = graph_of(10, {range(0, 10)});
  const std::vector<Match> m{fc(0, 0, 2.0), fc(1, 1, 1.5)};
  CHECK(vote_images(m, g).empty());
}

TEST_CASE("one query feature votes an image once with its best score") {
  const VisibilityGraph g = graph_of(4, {range(0, 4)});
  const std::vector<Match> m{fc(0, 0, 1.0), fc(0, 1, 0.6), fc(1, 2, 1.0), fc(2, 3, 1.0)};
  const auto ranking = vote_images(m, g);
  REQUIRE(ranking.size() == 1);
  CHECK(ranking[0].vote_count == 3);
  CHECK(ranking[0].score == doctest::Approx(3.0 / 2.0));
}

TEST_CASE("ranking ties go to the lower image id") {
  const VisibilityGraph g = graph_of(3, {range(0, 3), range(0, 3)});
  const std::vector<Match> m{fc(0, 0, 1.0), fc(1, 1, 1.0), fc(2, 2, 1.0)};
  const auto ranking = vote_images(m, g);
  REQUIRE(ranking.size() == 2);
  CHECK(ranking[0].image_id == 0);
  CHECK(ranking[1].image_id == 1);
}

TEST_CASE("select_pool keeps matches seen in the top images only") {
  // Image 0 ranks first, image 1 second.
  const VisibilityGraph g = graph_of(8, {range(0, 4), range(4, 8)});
  const std::vector<ImageVote> ranking{{0, 2.0, 3}, {1, 1.0, 3}};
  const std::vector<Match> m{fc(0, 1, 0.1), fc(1, 5, 3.0)};
  const auto top1 = select_pool(m, ranking, 1, g);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].point_id == 1);
  CHECK(select_pool(m, ranking, 5, g).size() == 2);
}

TEST_CASE("confidence split is inclusive at alpha") {
  const std::vector<Match> m{fc(0, 0, 0.9), fc(1, 1, 0.5), fc(2, 2, 0.8)};
  const ConfidenceSplit s = split_confidence(m, 0.8);
  CHECK(s.vfc.size() == 2);
  REQUIRE(s.vnfc.size() == 1);
  CHECK(s.vnfc[0].point_id == 1);
  CHECK(s.vnfc[0].has(kVNFC));
  CHECK(s.vfc[0].has(kVFC));
}

TEST_CASE("promotion example") {
  // Two top images; each observes one VFC and one VNFC match.
  const VisibilityGraph g = graph_of(3, {{0, 1}, {0, 2}});
  const std::vector<Match> vnfc{fc(0, 0, 0.5)};
  const std::vector<Match> vfc{fc(1, 1, 1.0), fc(2, 2, 1.0)};
  const std::vector<ImageVote> top{{0, 1.0, 3}, {1, 1.0, 3}};
  const Promotion p = promote_vnfc(vnfc, vfc, top, g, 0.8);
  REQUIRE(p.vfc_i.size() == 1);
  CHECK(p.vfc_i[0].promoted_score == doctest::Approx(1.05452).epsilon(1e-5));
  CHECK(p.vfc_i[0].has(kVFCI));
}

TEST_CASE("images without VFC matches add nothing") {
  const VisibilityGraph g = graph_of(2, {{0}, {1}});
  const std::vector<Match> vnfc{fc(0, 0, 0.5)};
  const std::vector<Match> vfc{fc(1, 1, 1.0)};
  const std::vector<ImageVote> top{{0, 1.0, 3}, {1, 1.0, 3}};
  const Promotion p = promote_vnfc(vnfc, vfc, top, g, 0.8);
  REQUIRE(p.vnfc.size() == 1);
  CHECK(p.vnfc[0].promoted_score == 0.5);
  CHECK(p.vfc_i.empty());
}

TEST_CASE("voting and promotion agree with the brute-force oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t np = 5 + rng() % 30;
    const std::size_t ni = 1 + rng() % 8;
    std::vector<std::vector<PointId>> images(ni);
    oracle::Graph og;
    og.images = static_cast<unsigned>(ni);
    for (std::size_t d = 0; d < ni; ++d) {
      for (PointId p = 0; p < np; ++p) {
        if (rng() % 3 == 0) {
          images[d].push_back(p);
          og.edges.insert({p, static_cast<unsigned>(d)});
        }
      }
      if (images[d].empty()) {
        images[d].push_back(0);
        og.edges.insert({0, static_cast<unsigned>(d)});
      }
    }
    const VisibilityGraph g = graph_of(np, images);

    std::vector<Match> matches;
    std::vector<oracle::Scored> scored;
    std::set<std::pair<unsigned, unsigned>> used;
    const std::size_t nm = 1 + rng() % 25;
    for (std::size_t i = 0; i < nm; ++i) {
      const auto q = static_cast<unsigned>(rng() % 8);
      const auto p = static_cast<unsigned>(rng() % np);
      if (!used.insert({q, p}).second) continue;
      const double e = std::round(u(rng) * 1000.0) / 1000.0;
      matches.push_back(fc(q, p, e));
      scored.push_back({q, p, e});
    }

    const auto ranking = vote_images(matches, g);
    const auto expected = oracle::voting(scored, og);
    REQUIRE(ranking.size() == expected.size());
    for (const ImageVote& v : ranking) {
      REQUIRE(expected.count(v.image_id) == 1);
      CHECK(oracle::close(v.score, expected.at(v.image_id)));
    }
    for (std::size_t i = 1; i < ranking.size(); ++i) {
      CHECK(ranking[i - 1].score >= ranking[i].score);
    }

    const std::size_t k = std::min<std::size_t>(ranking.size(), 1 + rng() % 4);
    const std::span<const ImageVote> top(ranking.data(), k);
    std::vector<unsigned> top_ids;
    for (const ImageVote& v : top) top_ids.push_back(v.image_id);
    const auto visible = select_pool(matches, top, k, g);
    const ConfidenceSplit split = split_confidence(visible, 0.8);
    const Promotion promo = promote_vnfc(split.vnfc, split.vfc, top, g, 0.8);

    std::vector<oracle::Scored> ovfc;
    std::vector<oracle::Scored> ovnfc;
    for (const Match& m : split.vfc) ovfc.push_back({m.query_id, m.point_id, m.score});
    for (const Match& m : split.vnfc) ovnfc.push_back({m.query_id, m.point_id, m.score});
    REQUIRE(promo.vnfc.size() == ovnfc.size());
    for (std::size_t i = 0; i < ovnfc.size(); ++i) {
      const double e = oracle::promoted(ovnfc[i], ovfc, ovnfc, top_ids, og, 0.8);
      const auto it = std::find_if(promo.vnfc.begin(), promo.vnfc.end(), [&](const Match& m) {
        return m.query_id == ovnfc[i].q && m.point_id == ovnfc[i].p;
      });
      REQUIRE(it != promo.vnfc.end());
      CHECK(oracle::close(it->promoted_score, e));
      CHECK(it->has(kVFCI) == (e >= 0.8));
    }
  }
}

TEST_CASE("run_visibility_filter: empty ranking and k = k1") {
  PipelineParams params;
  const VisibilityGraph g = graph_of(6, {range(0, 6)});

  FeaturePartition none;
  none.pool = {fc(0, 0, 1.0)};
  none.confident = none.pool;
  const VisibilityResult empty = run_visibility_filter(none, g, params);
  CHECK(empty.ranking.empty());
  CHECK(empty.selected.empty());
  CHECK(empty.pool.empty());

  FeaturePartition f;
  f.pool = {fc(0, 0, 1.0), fc(1, 1, 1.0), fc(2, 2, 1.0), fc(3, 3, 0.1)};
  f.confident = {f.pool[0], f.pool[1], f.pool[2]};
  params.k = params.k1 = 20;
  const VisibilityResult r = run_visibility_filter(f, g, params);
  CHECK(r.pool.size() == 4);
  CHECK(r.visible.size() == r.pool.size());
  CHECK(r.vfc_count == 3);
  for (const Match& s : r.selected) {
    CHECK(std::any_of(r.pool.begin(), r.pool.end(),
                      [&](const Match& m) { return m.key() == s.key(); }));
  }
}

TEST_CASE("all FC matches in one image are all selected") {
  PipelineParams params;
  const VisibilityGraph g = graph_of(5, {range(0, 5)});
  FeaturePartition f;
  for (PointId p = 0; p < 5; ++p) f.pool.push_back(fc(p, p, 1.0 + p));
  f.confident = f.pool;
  const VisibilityResult r = run_visibility_filter(f, g, params);
  CHECK(r.selected.size() == 5);
  CHECK(r.pool.size() == 5);
}

TEST_CASE("baseline voting selects every top-k match") {
  PipelineParams params;
  params.baseline_voting = true;
  const VisibilityGraph g = graph_of(5, {range(0, 5)});
  FeaturePartition f;
  for (PointId p = 0; p < 5; ++p) f.pool.push_back(fc(p, p, p < 3 ? 1.0 : 0.1));
  f.confident = {f.pool[0], f.pool[1], f.pool[2]};
  const VisibilityResult r = run_visibility_filter(f, g, params);
  CHECK(r.selected.size() == 5);
}
