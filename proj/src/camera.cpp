#include "panoepi/camera.hpp"

#include <Eigen/LU>  // determinant() used in the rotation check

#include <cmath>
#include <string>

namespace panoepi {

double wrap_angle(double a) {
  // remainder(a, 2*pi) lands in [-pi, pi]; fold the closed end.
  double w = std::remainder(a, 2.0 * kPi);
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

EquirectGrid::EquirectGrid(int w, int h) : width(w), height(h) {
  if (w < 2 || h < 2)
    throw DomainError("equirect grid must be at least 2x2, got " +
                      std::to_string(w) + "x" + std::to_string(h));
  if (w % 2 != 0)
    throw DomainError("equirect grid width must be even, got " +
                      std::to_string(w));
}

Eigen::Vector3d angles_to_unit(double yaw, double pitch) {
  double ct = std::cos(pitch);
  return {ct * std::cos(yaw), ct * std::sin(yaw), std::sin(pitch)};
}

std::pair<double, double> unit_to_angles(const Eigen::Vector3d& d) {
  double z = std::clamp(d.z(), -1.0, 1.0);
  double pitch = std::asin(z);
  double yaw = 0.0;
  if (d.x() != 0.0 || d.y() != 0.0) yaw = wrap_angle(std::atan2(d.y(), d.x()));
  return {yaw, pitch};
}

RayDir RayDir::from_angles(double yaw, double pitch) {
  if (!(pitch >= -kPi / 2 && pitch <= kPi / 2))
    throw DomainError("pitch " + std::to_string(pitch) +
                      " outside [-pi/2, pi/2]");
  RayDir r;
  r.yaw = wrap_angle(yaw);
  r.pitch = pitch;
  r.dir = angles_to_unit(r.yaw, r.pitch);
  return r;
}

RayDir RayDir::from_unit(const Eigen::Vector3d& d) {
  double n = d.norm();
  if (std::abs(n - 1.0) > 1e-9)
    throw DomainError("direction is not unit length (norm " +
                      std::to_string(n) + ")");
  RayDir r;
  r.dir = d / n;
  auto [yaw, pitch] = unit_to_angles(r.dir);
  r.yaw = yaw;
  r.pitch = pitch;
  return r;
}

RayDir pixel_to_angles(double u, double v, const EquirectGrid& grid) {
  if (!(u >= 0.0 && u < grid.width) || !(v >= 0.0 && v <= grid.height))
    throw DomainError("pixel (" + std::to_string(u) + ", " +
                      std::to_string(v) + ") outside " +
                      std::to_string(grid.width) + "x" +
                      std::to_string(grid.height) + " grid");
  double yaw = (u - grid.width / 2.0) / grid.width * 2.0 * kPi;
  double pitch = (grid.height / 2.0 - v) / grid.height * kPi;
  // Guard the poles against rounding drift past +-pi/2.
  pitch = std::clamp(pitch, -kPi / 2, kPi / 2);
  return RayDir::from_angles(yaw, pitch);
}

Eigen::Vector2d angles_to_pixel(const RayDir& ray, const EquirectGrid& grid) {
  double u = ray.yaw / (2.0 * kPi) * grid.width + grid.width / 2.0;
  double v = grid.height / 2.0 - ray.pitch / kPi * grid.height;
  // yaw in [-pi, pi) puts u in [0, W) up to rounding; keep the contract.
  if (u >= grid.width) u -= grid.width;
  if (u < 0.0) u = 0.0;
  v = std::clamp(v, 0.0, static_cast<double>(grid.height));
  return {u, v};
}

PoseSE3 PoseSE3::from_parts(const Eigen::Matrix3d& r,
                            const Eigen::Vector3d& t) {
  Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-10)
    throw DomainError("rotation is not orthonormal (max |R^T R - I| = " +
                      std::to_string(err.cwiseAbs().maxCoeff()) + ")");
  if (std::abs(r.determinant() - 1.0) > 1e-10)
    throw DomainError("rotation determinant is not +1 (det = " +
                      std::to_string(r.determinant()) + ")");
  return {r, t};
}

PoseSE3 pose4dof_to_se3(const Pose4DoF& p) {
  double c = std::cos(p.yaw), s = std::sin(p.yaw);
  Eigen::Matrix3d r;
  r << c, -s, 0.0,
       s,  c, 0.0,
       0.0, 0.0, 1.0;
  return {r, p.position};
}

Eigen::Vector2d project_point(const Eigen::Vector3d& point_world,
                              const PoseSE3& world_to_camera,
                              const EquirectGrid& grid) {
  Eigen::Vector3d p = world_to_camera.apply(point_world);
  double n = p.norm();
  if (n < 1e-12)
    throw DegenerateGeometryError(
        "point projects onto the camera center; bearing undefined");
  auto [yaw, pitch] = unit_to_angles(p / n);
  return angles_to_pixel(RayDir::from_angles(yaw, pitch), grid);
}

}  // namespace panoepi
