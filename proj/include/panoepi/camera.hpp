#pragma once

// Equirectangular (360-degree panorama) camera model.
//
// Conventions used throughout the library:
//   - World/camera frames are right-handed with Z up.
//   - yaw (azimuth) psi is measured in the XY plane from +X toward +Y,
//     normalized to [-pi, pi).
//   - pitch (elevation) theta is measured from the XY plane toward +Z,
//     in [-pi/2, pi/2].
//   - A WxH image maps u in [0, W) to yaw and v in [0, H] to pitch:
//         psi   = (u - W/2) / W * 2*pi
//         theta = (H/2 - v) / H * pi
//     so image center (W/2, H/2) looks along +X, u grows eastward (toward
//     +Y) and v grows downward (v = 0 is the north pole, v = H the south
//     pole). Pixel centers sit at half-integer coordinates.

#include <Eigen/Core>

#include <numbers>
#include <utility>

#include "panoepi/error.hpp"

namespace panoepi {

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle (radians) into [-pi, pi).
double wrap_angle(double a);

// Pixel grid of an equirectangular image.
struct EquirectGrid {
  int width = 0;
  int height = 0;

  EquirectGrid(int w, int h);  // validates: w >= 2 and even, h >= 2

  long long pixel_count() const {
    return static_cast<long long>(width) * height;
  }
  // Continuous center coordinates of pixel (col, row).
  Eigen::Vector2d pixel_center(int col, int row) const {
    return {col + 0.5, row + 0.5};
  }
};

// A viewing direction, kept both as angles and as a unit vector.
struct RayDir {
  double yaw = 0.0;    // [-pi, pi)
  double pitch = 0.0;  // [-pi/2, pi/2]
  Eigen::Vector3d dir{1.0, 0.0, 0.0};  // unit norm

  static RayDir from_angles(double yaw, double pitch);
  // d must be unit length within 1e-9; it is renormalized on storage.
  static RayDir from_unit(const Eigen::Vector3d& d);
};

// Direction of (yaw, pitch): (cos(theta)cos(psi), cos(theta)sin(psi),
// sin(theta)).
Eigen::Vector3d angles_to_unit(double yaw, double pitch);

// Inverse of angles_to_unit for unit d. At the poles (|z| = 1) yaw is
// undefined; returns yaw = 0 there.
std::pair<double, double> unit_to_angles(const Eigen::Vector3d& d);

// Continuous pixel coords -> viewing direction. u in [0, width),
// v in [0, height]; out-of-range throws DomainError.
RayDir pixel_to_angles(double u, double v, const EquirectGrid& grid);

// Viewing direction -> continuous pixel coords (u, v).
Eigen::Vector2d angles_to_pixel(const RayDir& ray, const EquirectGrid& grid);

// Rigid transform x -> R*x + t.
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  // this(inner(x)) == compose(inner).apply(x)
  PoseSE3 compose(const PoseSE3& inner) const {
    return {rotation * inner.rotation,
            rotation * inner.translation + translation};
  }
  PoseSE3 inverse() const {
    Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  // Validates R orthonormal and det(R) = 1, both within 1e-10.
  static PoseSE3 from_parts(const Eigen::Matrix3d& r,
                            const Eigen::Vector3d& t);
};

// Ground-vehicle pose: position plus heading about the world Z axis.
struct Pose4DoF {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;  // normalized to [-pi, pi)

  Pose4DoF() = default;
  Pose4DoF(const Eigen::Vector3d& position_, double yaw_)
      : position(position_), yaw(wrap_angle(yaw_)) {}
};

// Camera-to-world transform of a 4-DoF pose: R = Rz(yaw), t = position.
PoseSE3 pose4dof_to_se3(const Pose4DoF& p);

// Projects a world point into the panorama of a camera given by its
// world-to-camera transform. Throws DegenerateGeometryError when the point
// lies on the camera center (||R*q + t|| < 1e-12).
Eigen::Vector2d project_point(const Eigen::Vector3d& point_world,
                              const PoseSE3& world_to_camera,
                              const EquirectGrid& grid);

}  // namespace panoepi
