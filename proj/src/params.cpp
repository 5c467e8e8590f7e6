#include "cpfl/params.hpp"

#include <string>

#include "cpfl/types.hpp"

namespace cpfl {

void PipelineParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("invalid pipeline parameters: ") + what);
  };
  require(bits > 0 && bits % 8 == 0 && bits <= 256, "bits must be a multiple of 8 in (0, 256]");
  require(tau >= 0 && tau <= bits, "tau must lie in [0, bits]");
  require(phi > 0.0 && phi < 1.0, "phi must lie in (0, 1)");
  require(sigma > 0.0, "sigma must be positive");
  require(alpha > 0.0, "alpha must be positive");
  require(k >= 1 && k <= k1, "k must satisfy 1 <= k <= k1");
  require(spatial_budget >= 4, "spatial budget N must be at least 4");
  require(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1]");
  require(theta > 0.0, "theta must be positive");
  require(final_threshold > 0.0, "final threshold must be positive");
  require(aux_iterations >= 1 && final_iterations >= 1, "iteration counts must be positive");
  require(min_inliers >= 1, "min_inliers must be positive");
  require(!known_focal || *known_focal > 0.0, "known focal must be positive");
  require(baseline_tau >= 0 && baseline_tau <= bits, "baseline tau must lie in [0, bits]");
}

}  // namespace cpfl
