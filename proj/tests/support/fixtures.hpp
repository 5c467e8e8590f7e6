#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "cpfl/geometry.hpp"
#include "cpfl/pose_solvers.hpp"
#include "cpfl/synthetic.hpp"

namespace fixtures {

using cpfl::CameraPose;
using cpfl::Correspondence;
using cpfl::Vec2;
using cpfl::Vec3;

inline CameraPose random_pose(std::mt19937_64& rng, double focal) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  CameraPose pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.center = Vec3(n(rng), n(rng), n(rng)) * 5.0;
  pose.focal = focal;
  pose.principal_point = Vec2(512.0, 384.0);
  return pose;
}

// A world point that projects inside a 1024 x 768 image at depth [4, 20].
inline Vec3 point_in_view(std::mt19937_64& rng, const CameraPose& pose) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec2 px(u(rng) * 1024.0, u(rng) * 768.0);
  const double depth = 4.0 + 16.0 * u(rng);
  const Vec2 nrm = (px - pose.principal_point) / pose.focal;
  const Vec3 cam(nrm.x() * depth, nrm.y() * depth, depth);
  return pose.rotation.transpose() * cam + pose.center;
}

inline Correspondence observe(const CameraPose& pose, const Vec3& x, unsigned id) {
  return {x, pose.project(x), id, id};
}

// Largest pixel discrepancy between two poses over a set of points.
inline double max_reprojection_gap(const CameraPose& a, const CameraPose& b,
                                   const std::vector<Vec3>& pts) {
  double worst = 0.0;
  for (const Vec3& x : pts) worst = std::max(worst, (a.project(x) - b.project(x)).norm());
  return worst;
}

// Small unambiguous scene, cheap enough for unit tests.
inline cpfl::SyntheticSceneConfig small_scene(std::uint64_t seed) {
  cpfl::SyntheticSceneConfig c;
  c.num_points = 3000;
  c.num_db_images = 40;
  c.num_queries = 4;
  c.cluster_count = 300;
  c.max_query_features = 600;
  c.seed = seed;
  return c;
}

inline cpfl::ModelBuildOptions small_build(std::uint64_t seed) {
  cpfl::ModelBuildOptions o;
  o.vocabulary_size = 64;
  o.kmeans_sample = 5000;
  o.kmeans_iterations = 15;
  o.seed = seed;
  return o;
}

}  // namespace fixtures
