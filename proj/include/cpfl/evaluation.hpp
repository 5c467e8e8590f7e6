#pragma once

#include <array>
#include <span>
#include <vector>

#include "cpfl/pipeline.hpp"
#include "cpfl/synthetic.hpp"

namespace cpfl {

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1]. Empty
/// input yields NaN.
double quantile(std::vector<double> values, double q);

struct AccuracyBucket {
  double max_center_error = 0.0;
  double max_rotation_deg = 0.0;
  double percent = 0.0;
};

struct EvaluationReport {
  std::size_t num_queries = 0;
  std::size_t num_localized = 0;
  std::array<double, 3> center_quartiles{};    // 25 / 50 / 75 %
  std::array<double, 3> rotation_quartiles{};
  std::array<AccuracyBucket, 3> buckets{};
  double localized_fraction = 0.0;
  double mean_time_ms = 0.0;
  std::vector<double> center_errors;    // per localized query, in result order
  std::vector<double> rotation_errors;
};

/// Default intervals (0.25, 2 deg), (0.5, 5 deg), (5, 10 deg) in world units.
std::array<AccuracyBucket, 3> default_buckets();

/// Failed queries are left out of the quartiles but count in the bucket
/// denominators. Every result must have a matching ground truth id.
EvaluationReport evaluate(std::span<const LocalizationResult> results,
                          std::span<const QueryTruth> truth,
                          std::array<AccuracyBucket, 3> buckets = default_buckets());

}  // namespace cpfl
