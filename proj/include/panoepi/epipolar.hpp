#pragma once

// Epipolar geometry between two panoramas.
//
// For a pixel in view m with unit direction d_m, the matching pixel in view
// n must have its direction d_n on the great circle
//     d_n . (E d_m) = 0,   E = [t]_x R,
// where (R, t) maps view-m camera coordinates into view n. The plane normal
// n = E d_m gives the curve row in closed form per image column:
//     tan(theta') = -(n_x cos(psi') + n_y sin(psi')) / n_z.

#include <Eigen/Core>

#include <array>
#include <vector>

#include "panoepi/camera.hpp"

namespace panoepi {

// Cross-product matrix: skew(t) * v == t x v.
Eigen::Matrix3d skew(const Eigen::Vector3d& t);

// Relative transform taking view-m camera coordinates to view-n camera
// coordinates, from the two camera-to-world poses.
PoseSE3 relative_pose(const PoseSE3& cam_to_world_m,
                      const PoseSE3& cam_to_world_n);

struct EssentialMatrix {
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
  Eigen::Vector3d baseline = Eigen::Vector3d::Zero();  // t of the relative pose
  // Frame ids for error messages; negative when unknown.
  int source_frame = -1;
  int target_frame = -1;
};

// E = skew(t) * R from a relative pose (view m -> view n). Throws
// DegenerateGeometryError when the baseline is (numerically) zero.
EssentialMatrix essential(const PoseSE3& m_to_n, int source_frame = -1,
                          int target_frame = -1);

// Raw epipolar residual d_n . (E d_m) at two pixels.
double residual(const Eigen::Vector2d& pixel_m, const Eigen::Vector2d& pixel_n,
                const EssentialMatrix& e, const EquirectGrid& grid);

// Residual against the unit plane normal, d_n . (E d_m / ||E d_m||); this is
// the sine of the angular distance from d_n to the epipolar great circle and
// is the quantity the mask tolerance below refers to. Returns 0 when
// ||E d_m|| = 0 (query at an epipole: every direction matches).
double normalized_residual(const Eigen::Vector2d& pixel_m,
                           const Eigen::Vector2d& pixel_n,
                           const EssentialMatrix& e, const EquirectGrid& grid);

// The epipolar curve of one query pixel, traced through every image column
// of the target view at the column-center azimuth.
struct EpipolarCurve {
  struct Point {
    int column = 0;
    double u = 0.0;  // column-center coordinate, ascending
    double v = 0.0;
  };
  std::vector<Point> points;
  // Columns where the whole column satisfies the constraint (the curve runs
  // vertically through them); they carry no single curve row.
  std::vector<int> full_columns;
  // Query direction maps to E d_m = 0: every pixel of the target view
  // satisfies the constraint. points/full_columns are left empty.
  bool epipole_query = false;
};

EpipolarCurve epipolar_curve(const Eigen::Vector2d& pixel_m,
                             const EssentialMatrix& e,
                             const EquirectGrid& grid);

// Pixels of the target view that may correspond to one query pixel: per
// image column, the rows within band_halfwidth of the curve row.
struct EpipolarMask {
  struct Candidate {
    int col = 0;
    int row = 0;
  };

  Eigen::Vector2d query = Eigen::Vector2d::Zero();
  // Sorted by column, then row. Each entry names a pixel; its continuous
  // coordinates are the pixel center.
  std::vector<Candidate> candidates;
  // Guaranteed bound on |normalized_residual| at every candidate center:
  // max(eps, sin((band_halfwidth + 0.5) * pi / height)).
  double tolerance = 0.0;
  int band_halfwidth = 0;
  // Query at an epipole: all pixels are candidates. candidates is left
  // empty; consumers must treat the mask as full.
  bool epipole_full = false;
  // Columns fully included because the curve runs vertically through them.
  int degenerate_columns = 0;

  static Eigen::Vector2d center(const Candidate& c) {
    return {c.col + 0.5, c.row + 0.5};
  }
};

// eps > 0 is the caller's residual tolerance, band_halfwidth >= 0 the number
// of extra rows kept on each side of the curve row.
EpipolarMask epipolar_mask(const Eigen::Vector2d& pixel_m,
                           const EssentialMatrix& e, const EquirectGrid& grid,
                           double eps = 1e-3, int band_halfwidth = 1);

// The two epipoles of a relative pose: the projections of the baseline
// direction +-t. Throws DegenerateGeometryError on a zero baseline.
std::array<Eigen::Vector2d, 2> epipoles(const PoseSE3& m_to_n,
                                        const EquirectGrid& grid);
std::array<Eigen::Vector2d, 2> epipoles(const EssentialMatrix& e,
                                        const EquirectGrid& grid);

}  // namespace panoepi
