#pragma once

#include <Eigen/Geometry>

#include "cpfl/types.hpp"

namespace cpfl {

/// Pinhole camera: x_cam = rotation * (X - center), pixel = focal * (x/z, y/z)
/// + principal_point. No distortion.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 center = Vec3::Zero();
  double focal = 1.0;
  Vec2 principal_point = Vec2::Zero();

  Vec3 to_camera(const Vec3& world) const { return rotation * (world - center); }

  /// Projection of a world point; the caller checks cheirality.
  Vec2 project(const Vec3& world) const;

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation).normalized(); }
};

/// Pixel distance between `pixel` and the projection of `point`; +inf when the
/// point is not strictly in front of the camera.
double reprojection_error(const CameraPose& pose, const Vec3& point, const Vec2& pixel);

/// Angle of R_est * R_gt^T in degrees.
double rotation_error_deg(const Mat3& estimated, const Mat3& truth);

/// Rotation looking along `forward` with world `up` pointing to -y in the image.
Mat3 look_rotation(const Vec3& forward, const Vec3& up = Vec3::UnitZ());

}  // namespace cpfl
