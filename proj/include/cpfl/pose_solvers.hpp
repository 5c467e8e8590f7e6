#pragma once

#include <span>
#include <vector>

#include "cpfl/geometry.hpp"
#include "cpfl/types.hpp"

namespace cpfl {

/// A 2D-3D correspondence ready for pose estimation.
struct Correspondence {
  Vec3 point = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
  QueryId query_id = 0;
  PointId point_id = 0;
};

/// True when the three points are collinear up to a relative tolerance on the
/// sine of the angle they span.
bool is_collinear(const Vec3& a, const Vec3& b, const Vec3& c, double tolerance = 1e-9);

/// Perspective-three-point with known focal length. Returns every real,
/// positive-depth solution (at most four). Collinear or numerically
/// degenerate inputs give an empty set.
std::vector<CameraPose> p3p_solve(std::span<const Correspondence, 3> sample, double focal,
                                  const Vec2& principal_point);

struct FocalSearchOptions {
  double focal_min = 256.0;
  double focal_max = 6400.0;
  int grid_size = 40;
  int max_candidates = 4;
  double max_residual = 8.0;  // pixels, largest residual to accept a candidate
  double relative_tolerance = 1e-11;

  /// The default bracket: [0.2, 5] times the image diagonal.
  static FocalSearchOptions for_image(int width, int height);
};

/// Perspective-four-point with unknown focal length. Runs P3P on the first
/// three correspondences over a geometric focal grid, scores each focal by the
/// fourth point's reprojection error and refines every grid-local minimum by
/// golden-section search. Those minima and the local minima of each P3P
/// branch along the grid are then solved on all four points by damped
/// Gauss-Newton. Candidates are
/// ordered by their largest residual.
std::vector<CameraPose> p4p_solve(std::span<const Correspondence, 4> sample,
                                  const Vec2& principal_point,
                                  const FocalSearchOptions& options = {});

}  // namespace cpfl
