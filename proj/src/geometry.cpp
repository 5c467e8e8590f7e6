#include "cpfl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cpfl {

Vec2 CameraPose::project(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  return focal * Vec2(c.x() / c.z(), c.y() / c.z()) + principal_point;
}

double reprojection_error(const CameraPose& pose, const Vec3& point, const Vec2& pixel) {
  const Vec3 c = pose.to_camera(point);
  if (!(c.z() > 0.0)) return std::numeric_limits<double>::infinity();
  const Vec2 projected = pose.focal * Vec2(c.x() / c.z(), c.y() / c.z()) + pose.principal_point;
  return (projected - pixel).norm();
}

double rotation_error_deg(const Mat3& estimated, const Mat3& truth) {
  const double c = std::clamp(((estimated * truth.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

Mat3 look_rotation(const Vec3& forward, const Vec3& up) {
  const Vec3 z = forward.normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return r;
}

}  // namespace cpfl
