#include "panoepi/epipolar.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace panoepi {

namespace {

// ||E d_m|| below this fraction of ||t|| means the query looks (anti)parallel
// to the baseline, i.e. sits on an epipole.
constexpr double kEpipoleRelTol = 1e-12;
// |n_z| below this on the unit plane normal makes the per-column row solve
// ill-conditioned; the curve runs (numerically) vertically.
constexpr double kVerticalColumnEps = 1e-9;

std::string frame_pair_label(const EssentialMatrix& e) {
  if (e.source_frame < 0 && e.target_frame < 0) return "";
  return " (frames " + std::to_string(e.source_frame) + " and " +
         std::to_string(e.target_frame) + ")";
}

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
  Eigen::Matrix3d s;
  s <<    0.0, -t.z(),  t.y(),
        t.z(),    0.0, -t.x(),
       -t.y(),  t.x(),    0.0;
  return s;
}

PoseSE3 relative_pose(const PoseSE3& cam_to_world_m,
                      const PoseSE3& cam_to_world_n) {
  return cam_to_world_n.inverse().compose(cam_to_world_m);
}

EssentialMatrix essential(const PoseSE3& m_to_n, int source_frame,
                          int target_frame) {
  if (m_to_n.translation.norm() <= 1e-12) {
    std::string label;
    if (source_frame >= 0 || target_frame >= 0)
      label = " between frames " + std::to_string(source_frame) + " and " +
              std::to_string(target_frame);
    throw DegenerateGeometryError(
        "zero baseline" + label + ": epipolar geometry undefined");
  }
  EssentialMatrix e;
  e.e = skew(m_to_n.translation) * m_to_n.rotation;
  e.baseline = m_to_n.translation;
  e.source_frame = source_frame;
  e.target_frame = target_frame;
  return e;
}

double residual(const Eigen::Vector2d& pixel_m, const Eigen::Vector2d& pixel_n,
                const EssentialMatrix& e, const EquirectGrid& grid) {
  Eigen::Vector3d dm = pixel_to_angles(pixel_m.x(), pixel_m.y(), grid).dir;
  Eigen::Vector3d dn = pixel_to_angles(pixel_n.x(), pixel_n.y(), grid).dir;
  return dn.dot(e.e * dm);
}

double normalized_residual(const Eigen::Vector2d& pixel_m,
                           const Eigen::Vector2d& pixel_n,
                           const EssentialMatrix& e,
                           const EquirectGrid& grid) {
  Eigen::Vector3d dm = pixel_to_angles(pixel_m.x(), pixel_m.y(), grid).dir;
  Eigen::Vector3d dn = pixel_to_angles(pixel_n.x(), pixel_n.y(), grid).dir;
  Eigen::Vector3d n = e.e * dm;
  double nn = n.norm();
  if (nn <= kEpipoleRelTol * e.baseline.norm()) return 0.0;
  return dn.dot(n) / nn;
}

EpipolarCurve epipolar_curve(const Eigen::Vector2d& pixel_m,
                             const EssentialMatrix& e,
                             const EquirectGrid& grid) {
  EpipolarCurve curve;
  Eigen::Vector3d dm = pixel_to_angles(pixel_m.x(), pixel_m.y(), grid).dir;
  Eigen::Vector3d n = e.e * dm;
  double nn = n.norm();
  if (nn <= kEpipoleRelTol * e.baseline.norm()) {
    curve.epipole_query = true;
    return curve;
  }
  Eigen::Vector3d nh = n / nn;

  const int w = grid.width, h = grid.height;
  curve.points.reserve(w);
  for (int col = 0; col < w; ++col) {
    double u = col + 0.5;
    double psi = (u - w / 2.0) / w * 2.0 * kPi;
    double c = nh.x() * std::cos(psi) + nh.y() * std::sin(psi);
    if (std::abs(nh.z()) < kVerticalColumnEps) {
      // Near-vertical curve: either the whole column satisfies the
      // constraint (c ~ 0) or no row does.
      if (std::abs(c) < kVerticalColumnEps) curve.full_columns.push_back(col);
      continue;
    }
    double theta = std::atan(-c / nh.z());
    double v = h / 2.0 - theta / kPi * h;
    curve.points.push_back({col, u, v});
  }
  return curve;
}

EpipolarMask epipolar_mask(const Eigen::Vector2d& pixel_m,
                           const EssentialMatrix& e, const EquirectGrid& grid,
                           double eps, int band_halfwidth) {
  if (!(eps > 0.0))
    throw DomainError("mask tolerance must be positive, got " +
                      std::to_string(eps));
  if (band_halfwidth < 0)
    throw DomainError("band halfwidth must be >= 0, got " +
                      std::to_string(band_halfwidth));

  const int w = grid.width, h = grid.height;
  EpipolarMask mask;
  mask.query = pixel_m;
  mask.band_halfwidth = band_halfwidth;
  // Any pixel whose row is within the band of the curve row has its center
  // within (band + 0.5) rows of the curve, i.e. within that many pitch steps
  // of the epipolar plane.
  mask.tolerance = std::max(eps, std::sin((band_halfwidth + 0.5) * kPi / h));

  EpipolarCurve curve = epipolar_curve(pixel_m, e, grid);
  if (curve.epipole_query) {
    mask.epipole_full = true;
    return mask;
  }

  // Per-column row range; {1, 0} marks an empty column.
  std::vector<std::pair<int, int>> ranges(w, {1, 0});
  for (const auto& pt : curve.points) {
    int rc = std::clamp(static_cast<int>(std::floor(pt.v)), 0, h - 1);
    ranges[pt.column] = {std::max(0, rc - band_halfwidth),
                         std::min(h - 1, rc + band_halfwidth)};
  }
  for (int col : curve.full_columns) ranges[col] = {0, h - 1};
  mask.degenerate_columns = static_cast<int>(curve.full_columns.size());

  mask.candidates.reserve(static_cast<size_t>(w) * (2 * band_halfwidth + 1));
  for (int col = 0; col < w; ++col)
    for (int row = ranges[col].first; row <= ranges[col].second; ++row)
      mask.candidates.push_back({col, row});
  return mask;
}

std::array<Eigen::Vector2d, 2> epipoles(const PoseSE3& m_to_n,
                                        const EquirectGrid& grid) {
  double tn = m_to_n.translation.norm();
  if (tn <= 1e-12)
    throw DegenerateGeometryError("zero baseline: epipoles undefined");
  Eigen::Vector3d t = m_to_n.translation / tn;
  return {angles_to_pixel(RayDir::from_unit(t), grid),
          angles_to_pixel(RayDir::from_unit(-t), grid)};
}

std::array<Eigen::Vector2d, 2> epipoles(const EssentialMatrix& e,
                                        const EquirectGrid& grid) {
  std::string label = frame_pair_label(e);
  double tn = e.baseline.norm();
  if (tn <= 1e-12)
    throw DegenerateGeometryError("zero baseline" + label +
                                  ": epipoles undefined");
  Eigen::Vector3d t = e.baseline / tn;
  return {angles_to_pixel(RayDir::from_unit(t), grid),
          angles_to_pixel(RayDir::from_unit(-t), grid)};
}

}  // namespace panoepi
