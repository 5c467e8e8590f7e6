#pragma once

#include <optional>

namespace cpfl {

/// Every tunable of the localization pipeline. Defaults suit 64-bit
/// signatures.
struct PipelineParams {
  int bits = 64;                 // B
  int tau = 19;                  // coarse Hamming threshold
  double phi = 0.3;              // image-side ratio gate
  double sigma = 16.0;           // Gaussian width, B / 4
  double alpha = 0.8;            // FC score threshold
  int k = 20;                    // strict image count
  int k1 = 100;                  // relaxed image count
  int spatial_budget = 100;      // N
  double beta = 0.33;            // VFC-I cap ratio
  double theta = 10.0;           // auxiliary-pose recovery threshold, pixels
  double final_threshold = 4.0;  // pixels
  int aux_iterations = 1000;
  int final_iterations = 1000;
  int min_inliers = 12;
  std::optional<double> known_focal;

  // Ablation and fidelity switches.
  bool quality_aware_reconfiguration = true;  // QSR
  bool principal_focal = true;                // PFL
  bool baseline_voting = false;
  int baseline_tau = 11;
  bool literal_zero_weight = false;  // w(0) = 0 as printed

  /// Throws ValidationError naming the first violated constraint.
  void validate() const;
};

}  // namespace cpfl
