#include "cpfl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace cpfl {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::array<AccuracyBucket, 3> default_buckets() {
  return {AccuracyBucket{0.25, 2.0, 0.0}, AccuracyBucket{0.5, 5.0, 0.0},
          AccuracyBucket{5.0, 10.0, 0.0}};
}

EvaluationReport evaluate(std::span<const LocalizationResult> results,
                          std::span<const QueryTruth> truth, std::array<AccuracyBucket, 3> buckets) {
  std::map<QueryId, const QueryTruth*> by_id;
  for (const QueryTruth& t : truth) by_id[t.id] = &t;

  EvaluationReport report;
  report.num_queries = results.size();
  std::array<std::size_t, 3> hits{};
  double total_ms = 0.0;
  for (const LocalizationResult& r : results) {
    const auto it = by_id.find(r.query_id);
    if (it == by_id.end()) {
      throw ValidationError("no ground truth for query " + std::to_string(r.query_id));
    }
    total_ms += r.timings.total_ms();
    if (r.status != Status::kLocalized) continue;
    ++report.num_localized;
    const double ce = (r.pose.center - it->second->pose.center).norm();
    const double re = rotation_error_deg(r.pose.rotation, it->second->pose.rotation);
    report.center_errors.push_back(ce);
    report.rotation_errors.push_back(re);
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (ce <= buckets[b].max_center_error && re <= buckets[b].max_rotation_deg) ++hits[b];
    }
  }
  const std::array<double, 3> qs{0.25, 0.5, 0.75};
  for (std::size_t i = 0; i < 3; ++i) {
    report.center_quartiles[i] = quantile(report.center_errors, qs[i]);
    report.rotation_quartiles[i] = quantile(report.rotation_errors, qs[i]);
  }
  const double n = static_cast<double>(report.num_queries);
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].percent = n > 0 ? 100.0 * static_cast<double>(hits[b]) / n : 0.0;
  }
  report.buckets = buckets;
  report.localized_fraction = n > 0 ? static_cast<double>(report.num_localized) / n : 0.0;
  report.mean_time_ms = n > 0 ? total_ms / n : 0.0;
  return report;
}

}  // namespace cpfl
