// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cpfl/container.hpp"
#include "cpfl/evaluation.hpp"
#include "cpfl/io.hpp"
#include "cpfl/pipeline.hpp"
#include "cpfl/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace cpfl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

int failures = 0;

void report(int n, const char* title, const std::function<Outcome()>& run) {
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

struct Built {
  SyntheticScene scene;
  CompressedModel model;
  std::vector<Query> queries;
};

Built build(const SyntheticSceneConfig& config, const ModelBuildOptions& options) {
  Built b;
  b.scene = generate_scene(config);
  const Vocabulary vocab = train_vocabulary_on_points(b.scene.points, options);
  b.model = build_model(b.scene.points, b.scene.images, vocab, options);
  for (const RawQuery& q : b.scene.queries) {
    b.queries.push_back(encode_query_image(q, b.model.vocab, b.model.embedding));
  }
  return b;
}

std::vector<Match> to_matches(const std::vector<oracle::Pair>& pairs) {
  std::vector<Match> out;
  for (const auto& x : pairs) {
    Match m;
    m.query_id = x.q;
    m.point_id = x.p;
    m.hamming = x.h;
    out.push_back(m);
  }
  return out;
}

std::vector<oracle::Pair> random_pairs(std::mt19937_64& rng, int tau) {
  const unsigned nq = 1 + rng() % 8;
  const unsigned np = 1 + rng() % 8;
  std::vector<oracle::Pair> pairs;
  for (unsigned q = 0; q < nq; ++q) {
    for (unsigned p = 0; p < np; ++p) {
      if (rng() % 2) pairs.push_back({q, p, static_cast<int>(rng() % (tau + 1))});
    }
  }
  if (pairs.empty()) pairs.push_back({0, 0, static_cast<int>(rng() % (tau + 1))});
  return pairs;
}

// ---------------------------------------------------------------------------

Outcome formula_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  const int n = 1000;
  std::mt19937_64 rng(1001);
  PipelineParams p;
  std::size_t compared = 0;

  // Ratios, weight and score.
  for (int trial = 0; trial < n; ++trial) {
    const auto pairs = random_pairs(rng, p.tau);
    auto ms = to_matches(pairs);
    std::shuffle(ms.begin(), ms.end(), rng);
    const CandidateSet c = CandidateSet::from_matches(ms);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Match& m = c.matches()[i];
      const oracle::Pair x{m.query_id, m.point_id, m.hamming};
      const RatioTest r = bilateral_ratio_test(m.hamming, c.image_side(i), c.model_side(i), p.phi);
      o.require(oracle::close(r.t_image, oracle::t_image(pairs, x)), "image-side ratio mismatch");
      o.require(oracle::close(r.t_model, oracle::t_model(pairs, x)), "model-side ratio mismatch");
      o.require(oracle::close(r.ratio, oracle::ratio(pairs, x, p.phi)), "bilateral ratio mismatch");
      o.require(oracle::close(gaussian_weight(m.hamming, p.sigma, p.tau), oracle::weight(m.hamming, p.sigma, p.tau)),
                "weight mismatch");
      ++compared;
    }
    const FeaturePartition part = score_and_partition(c, p);
    for (const Match& m : part.pool) {
      o.require(oracle::close(m.score, oracle::score(pairs, {m.query_id, m.point_id, m.hamming}, p.phi, p.sigma, p.tau)),
                "score mismatch");
    }
  }

  // Image voting and promotion on random graphs.
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < n; ++trial) {
    const std::size_t np = 5 + rng() % 30;
    const std::size_t ni = 1 + rng() % 8;
    oracle::Graph og;
    og.images = static_cast<unsigned>(ni);
    std::vector<std::pair<PointId, ImageId>> edges;
    for (std::size_t d = 0; d < ni; ++d) {
      bool any = false;
      for (PointId pt = 0; pt < np; ++pt) {
        if (rng() % 3 == 0 || (!any && pt + 1 == np)) {
          edges.push_back({pt, static_cast<ImageId>(d)});
          og.edges.insert({pt, static_cast<unsigned>(d)});
          any = true;
        }
      }
    }
    const VisibilityGraph g = VisibilityGraph::from_edges(np, ni, edges);
    std::vector<Match> fc;
    std::vector<oracle::Scored> scored;
    std::set<std::pair<unsigned, unsigned>> used;
    const std::size_t nm = 1 + rng() % 30;
    for (std::size_t i = 0; i < nm; ++i) {
      const auto q = static_cast<unsigned>(rng() % 8);
      const auto pt = static_cast<unsigned>(rng() % np);
      if (!used.insert({q, pt}).second) continue;
      Match m;
      m.query_id = q;
      m.point_id = pt;
      m.score = m.promoted_score = u(rng);
      fc.push_back(m);
      scored.push_back({q, pt, m.score});
    }
    const auto ranking = vote_images(fc, g);
    const auto expected = oracle::voting(scored, og);
    o.require(ranking.size() == expected.size(), "ranked image count mismatch");
    for (const ImageVote& v : ranking) {
      o.require(expected.count(v.image_id) && oracle::close(v.score, expected.at(v.image_id)),
                "image score mismatch");
    }

    const std::size_t k = std::min<std::size_t>(ranking.size(), 1 + rng() % 4);
    const std::span<const ImageVote> top(ranking.data(), k);
    std::vector<unsigned> top_ids;
    for (const ImageVote& v : top) top_ids.push_back(v.image_id);
    const auto visible = select_pool(fc, top, k, g);
    const ConfidenceSplit split = split_confidence(visible, p.alpha);
    const Promotion promo = promote_vnfc(split.vnfc, split.vfc, top, g, p.alpha);
    std::vector<oracle::Scored> ovfc;
    std::vector<oracle::Scored> ovnfc;
    for (const Match& m : split.vfc) ovfc.push_back({m.query_id, m.point_id, m.score});
    for (const Match& m : split.vnfc) ovnfc.push_back({m.query_id, m.point_id, m.score});
    o.require(promo.vnfc.size() == ovnfc.size(), "promotion size mismatch");
    for (std::size_t i = 0; i < std::min(promo.vnfc.size(), ovnfc.size()); ++i) {
      const double e = oracle::promoted(ovnfc[i], ovfc, ovnfc, top_ids, og, p.alpha);
      o.require(promo.vnfc[i].query_id == ovnfc[i].q && oracle::close(promo.vnfc[i].promoted_score, e),
                "promoted score mismatch");
    }
  }

  // Bin shares from pixel positions.
  std::uniform_real_distribution<double> ux(0.0, 1024.0);
  std::uniform_real_distribution<double> uy(0.0, 768.0);
  for (int trial = 0; trial < n; ++trial) {
    std::vector<std::array<double, 2>> px;
    std::array<int, BinGrid::kBins> counts{};
    const std::size_t m = 1 + rng() % 200;
    const double spread = 0.05 + 0.95 * static_cast<double>(rng() % 100) / 100.0;
    for (std::size_t i = 0; i < m; ++i) {
      const Vec2 v(ux(rng) * spread, uy(rng) * spread);
      px.push_back({v.x(), v.y()});
      ++counts[static_cast<std::size_t>(BinGrid::bin_of(v, 1024, 768))];
    }
    const auto got = bin_shares(counts);
    const auto want = oracle::shares(px, 1024, 768);
    for (std::size_t b = 0; b < got.size(); ++b) o.require(oracle::close(got[b], want[b]), "bin share mismatch");
  }

  const double secs = seconds_since(t0);
  o.require(secs < 10.0, fmt("runtime %.2f s", secs));
  if (o.pass) o.detail = fmt("%d instances per formula, %zu matches compared, %.2f s", n, compared, secs);
  return o;
}

Outcome weight_constants() {
  Outcome o;
  for (int bits : {64, 128, 256}) {
    const double sigma = bits / 4.0;
    const int tau = static_cast<int>(std::lround(0.3 * bits));
    const int half = bits / 8;
    o.require(gaussian_weight(half, sigma, tau) == 4.0 * std::exp(-0.25), fmt("w(sigma/2) at B=%d", bits));
    for (int h = 1; h < tau; ++h) {
      o.require(gaussian_weight(h + 1, sigma, tau) <= gaussian_weight(h, sigma, tau),
                fmt("w increases at h=%d, B=%d", h, bits));
    }
    for (int h = tau + 1; h <= bits; ++h) o.require(gaussian_weight(h, sigma, tau) == 0.0, "w(h > tau) != 0");
  }
  // The default configuration.
  PipelineParams p;
  o.require(gaussian_weight(8, p.sigma, p.tau) == 4.0 * std::exp(-0.25), "w(8) at defaults");
  o.require(gaussian_weight(20, p.sigma, p.tau) == 0.0, "w(20) at defaults");
  if (o.pass) o.detail = "B in {64, 128, 256}";
  return o;
}

Outcome set_algebra() {
  Outcome o;
  std::mt19937_64 rng(303);
  std::size_t pipelines = 0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SyntheticSceneConfig c = fixtures::small_scene(seed);
    c.spatial_clustering = 0.2 * static_cast<double>(seed % 5);
    c.outlier_match_rate = 0.1 * static_cast<double>(seed);
    c.cluster_count = 100 + 100 * static_cast<int>(seed);
    const Built b = build(c, fixtures::small_build(seed));
    for (const Query& q : b.queries) {
      for (int variant = 0; variant < 5; ++variant) {
        PipelineParams p;
        p.k = 1 + static_cast<int>(rng() % 30);
        p.k1 = p.k + static_cast<int>(rng() % 80);
        p.alpha = 0.3 + 0.2 * static_cast<double>(rng() % 6);
        p.phi = 0.1 * static_cast<double>(1 + rng() % 6);
        p.aux_iterations = p.final_iterations = 50;
        LocalizationTrace t;
        localize(q, b.model, p, seed, &t);
        ++pipelines;

        std::set<std::pair<QueryId, PointId>> m;
        std::set<std::pair<QueryId, PointId>> visible;
        std::set<std::pair<QueryId, PointId>> pool;
        for (const Match& x : t.features.pool) m.insert(x.key());
        for (const Match& x : t.visibility.visible) visible.insert(x.key());
        for (const Match& x : t.visibility.pool) pool.insert(x.key());
        for (const Match& x : t.features.confident) o.require(m.count(x.key()) == 1, "M_FC not in M");
        for (const Match& x : t.visibility.selected) {
          o.require(visible.count(x.key()) == 1, "selected not in M^d(k)");
          o.require(!(x.has(kVFC) && x.has(kVFCI)), "VFC and VFC-I overlap");
          o.require(x.has(kVFC) || x.has(kVFCI), "selected match without a flag");
        }
        for (const Match& x : t.visibility.visible) {
          o.require(pool.count(x.key()) == 1, "M^d(k) not in M^d(k1)");
          o.require(x.promoted_score >= x.score, "E' < E");
          ++checked;
        }
        for (const Match& x : t.visibility.pool) o.require(m.count(x.key()) == 1, "M^d(k1) not in M");
        o.require(t.visibility.selected.size() == t.visibility.vfc_count + t.visibility.vfc_i_count,
                  "selected size differs from |VFC| + |VFC-I|");
      }
    }
  }
  if (o.pass) o.detail = fmt("%zu randomized pipelines, %zu visible matches", pipelines, checked);
  return o;
}

Outcome solver_round_trips() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> uf(500.0, 2000.0);
  int p3p_ok = 0;
  double worst_p3p = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const CameraPose truth = fixtures::random_pose(rng, uf(rng));
    std::array<Correspondence, 3> s;
    std::vector<Vec3> pts;
    for (unsigned i = 0; i < 3; ++i) {
      pts.push_back(fixtures::point_in_view(rng, truth));
      s[i] = fixtures::observe(truth, pts.back(), i);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const CameraPose& c : p3p_solve(s, truth.focal, truth.principal_point)) {
      best = std::min(best, fixtures::max_reprojection_gap(c, truth, pts));
    }
    worst_p3p = std::max(worst_p3p, best);
    p3p_ok += best <= 1e-6;
  }
  int p4p_ok = 0;
  double worst_p4p = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const CameraPose truth = fixtures::random_pose(rng, uf(rng));
    std::array<Correspondence, 4> s;
    for (unsigned i = 0; i < 4; ++i) s[i] = fixtures::observe(truth, fixtures::point_in_view(rng, truth), i);
    double best = std::numeric_limits<double>::infinity();
    for (const CameraPose& c : p4p_solve(s, truth.principal_point, FocalSearchOptions::for_image(1024, 768))) {
      best = std::min(best, std::abs(c.focal - truth.focal) / truth.focal);
    }
    worst_p4p = std::max(worst_p4p, best);
    p4p_ok += best <= 1e-3;
  }
  const double secs = seconds_since(t0);
  o.require(p3p_ok == 1000, fmt("P3P %d/1000", p3p_ok));
  o.require(p4p_ok == 500, fmt("P4P %d/500", p4p_ok));
  o.require(secs < 30.0, fmt("runtime %.2f s", secs));
  o.detail = fmt("P3P %d/1000 worst %.1e px, P4P %d/500 worst %.1e rel, %.2f s", p3p_ok, worst_p3p, p4p_ok,
                 worst_p4p, secs);
  return o;
}

Outcome end_to_end() {
  Outcome o;
  SyntheticSceneConfig c;
  c.num_points = 50000;
  c.num_db_images = 200;
  c.num_queries = 50;
  c.cluster_count = 5000;
  c.seed = 1;
  ModelBuildOptions opts;
  opts.vocabulary_size = 1000;
  opts.seed = 1;
  const Built b = build(c, opts);

  PipelineParams p;
  std::vector<LocalizationResult> results;
  std::size_t candidates = 0;
  std::size_t wrong = 0;
  double slowest = 0.0;
  double total = 0.0;
  for (const Query& q : b.queries) {
    LocalizationTrace t;
    const auto t0 = Clock::now();
    results.push_back(localize(q, b.model, p, c.seed + q.id, &t));
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    total += secs;
    const QueryTruth& truth = b.scene.truth[q.id];
    for (const Match& m : t.candidates.matches()) {
      ++candidates;
      wrong += truth.labels[m.query_id] != static_cast<std::int64_t>(m.point_id);
    }
  }
  const double wrong_fraction = static_cast<double>(wrong) / static_cast<double>(candidates);
  const EvaluationReport r =
      evaluate(results, b.scene.truth, {AccuracyBucket{0.005 * b.scene.diameter, 1.0, 0.0}, {}, {}});
  o.require(wrong_fraction >= 0.4, fmt("wrong candidate fraction %.2f", wrong_fraction));
  o.require(r.buckets[0].percent >= 90.0, fmt("%.1f%% within tolerance", r.buckets[0].percent));
  o.require(slowest < 5.0, fmt("slowest query %.2f s", slowest));
  o.detail = fmt("%.1f%% of %zu within %.3f and 1 deg, %zu localized, wrong candidates %.0f%%, mean %.2f s, max %.2f s",
                 r.buckets[0].percent, results.size(), 0.005 * b.scene.diameter, r.num_localized,
                 100.0 * wrong_fraction, total / static_cast<double>(results.size()), slowest);
  return o;
}

// One-sided sign test: probability of at least `wins` successes out of
// `wins + losses` fair coin flips.
double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  double p = 0.0;
  for (int k = wins; k <= n; ++k) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

double median_of_errors(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  if (n % 2) return v[n / 2];
  const double a = v[n / 2 - 1];
  const double b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(a) ? a : b;
  return 0.5 * (a + b);
}

Outcome ablation_direction() {
  Outcome o;
  const int seeds = 100;
  std::vector<double> full;
  std::vector<double> no_qsr;
  std::vector<double> no_pfl;
  int localized_full = 0;
  int localized_base = 0;
  for (int s = 1; s <= seeds; ++s) {
    SyntheticSceneConfig c = fixtures::small_scene(static_cast<std::uint64_t>(1000 + s));
    c.num_queries = 1;
    c.spatial_clustering = 0.8;
    c.cluster_count = 200;
    c.outlier_match_rate = 0.4;
    const Built b = build(c, fixtures::small_build(c.seed));
    const Query& q = b.queries[0];
    const QueryTruth& truth = b.scene.truth[0];
    auto error = [&](const PipelineParams& p) {
      const LocalizationResult r = localize(q, b.model, p, c.seed);
      if (r.status != Status::kLocalized) return std::numeric_limits<double>::infinity();
      return (r.pose.center - truth.pose.center).norm();
    };
    PipelineParams p;
    full.push_back(error(p));
    PipelineParams pq = p;
    pq.quality_aware_reconfiguration = false;
    no_qsr.push_back(error(pq));
    PipelineParams pf = p;
    pf.principal_focal = false;
    no_pfl.push_back(error(pf));
    PipelineParams pb = p;
    pb.baseline_voting = true;
    localized_full += std::isfinite(full.back());
    localized_base += localize(q, b.model, pb, c.seed).status == Status::kLocalized;
  }

  auto compare = [&](const std::vector<double>& ablated, const char* name) {
    int wins = 0;
    int losses = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
      wins += full[i] < ablated[i];
      losses += full[i] > ablated[i];
    }
    const double mf = median_of_errors(full);
    const double ma = median_of_errors(ablated);
    const double pv = sign_test_p(wins, losses);
    o.require(mf <= ma, fmt("median %.4f > %s median %.4f", mf, name, ma));
    o.require(pv < 0.05, fmt("%s sign test p = %.3f (%d better, %d worse)", name, pv, wins, losses));
    return fmt("%s: median %.4f vs %.4f, %d/%d better, p=%.3g", name, mf, ma, wins, losses, pv);
  };
  const std::string a = compare(no_qsr, "w/o QSR");
  const std::string b = compare(no_pfl, "w/o PFL");
  o.require(localized_base <= localized_full,
            fmt("baseline localized %d > full %d", localized_base, localized_full));
  const std::string summary =
      a + "; " + b + fmt("; localized full %d, baseline %d", localized_full, localized_base);
  o.detail = o.pass ? summary : o.detail + "; " + summary;
  return o;
}

Outcome memory_claim() {
  Outcome o;
  const SyntheticScene s = generate_scene(fixtures::small_scene(77));
  const ModelBuildOptions opts = fixtures::small_build(77);
  const CompressedModel m = build_model(s.points, s.images, train_vocabulary_on_points(s.points, opts), opts);
  const MemoryReport r = memory_report(m);
  std::ostringstream printed;
  print_memory_report(printed, r);
  o.require(r.bits == 64, "bits");
  o.require(r.signature_bytes_per_entry == 8, fmt("%zu bytes per signature", r.signature_bytes_per_entry));
  o.require(r.signature_payload == r.num_entries * 8, "signature payload");
  o.require(r.entry_reduction >= 8.0, fmt("reduction %.2fx", r.entry_reduction));
  o.require(printed.str().find("8") != std::string::npos, "report not printed");

  const auto first = serialize_model(m);
  const auto second = serialize_model(deserialize_model(first));
  o.require(first == second, "container bytes differ after a round trip");
  if (o.pass) {
    o.detail = fmt("%zu entries, %zu B per signature, %.2fx entry-table reduction, %zu container bytes round-trip",
                   r.num_entries, r.signature_bytes_per_entry, r.entry_reduction, first.size());
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  auto run = [](int threads) {
    const Built b = build(fixtures::small_scene(88), fixtures::small_build(88));
    const auto results = localize_all(b.queries, b.model, PipelineParams{}, 88, threads);
    std::ostringstream os;
    write_results(os, results, false);
    return std::make_pair(serialize_model(b.model), os.str());
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(2);
  o.require(a.first == b.first, "model bytes differ between runs");
  o.require(a.second == b.second, "results differ between runs");
  o.require(a.second == c.second, "results differ with two threads");
  if (o.pass) o.detail = fmt("%zu result bytes and %zu model bytes identical", a.second.size(), a.first.size());
  return o;
}

}  // namespace

int main() {
  report(1, "formula oracles", formula_oracles);
  report(2, "weight constants and monotonicity", weight_constants);
  report(3, "set-algebra invariants", set_algebra);
  report(4, "solver round trips", solver_round_trips);
  report(5, "end-to-end synthetic localization", end_to_end);
  report(6, "ablation direction", ablation_direction);
  report(7, "memory accounting and container round trip", memory_claim);
  report(8, "determinism", determinism);
  return failures == 0 ? 0 : 1;
}
