#pragma once

// Triplane scene representation: three axis-aligned feature planes (XY, XZ,
// YZ). A 3D point samples each plane bilinearly at its projection onto that
// plane and the three feature vectors are summed.

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "panoepi/camera.hpp"
#include "panoepi/error.hpp"

namespace panoepi {

enum class PlaneAxes { XY, XZ, YZ };

const char* plane_name(PlaneAxes axes);

// Projection of a 3D point onto a plane's two axes, in world units.
Eigen::Vector2d plane_coords(PlaneAxes axes, const Eigen::Vector3d& x);

// A regular grid of feature vectors over a rectangle of two world axes.
// Nodes sit on the extent boundary: node (r, c) has world coords
//   a = a_min + c * (a_max - a_min) / (cols - 1)
//   b = b_min + r * (b_max - b_min) / (rows - 1)
// (first axis along columns, second along rows).
struct FeaturePlane {
  PlaneAxes axes = PlaneAxes::XY;
  int rows = 0, cols = 0, channels = 0;
  double a_min = 0.0, a_max = 0.0;
  double b_min = 0.0, b_max = 0.0;
  std::vector<double> data;  // [row][col][channel]

  FeaturePlane() = default;
  FeaturePlane(PlaneAxes axes_, int rows_, int cols_, int channels_,
               double a_min_, double a_max_, double b_min_, double b_max_);

  double& at(int row, int col, int ch) {
    return data[(static_cast<size_t>(row) * cols + col) * channels + ch];
  }
  double at(int row, int col, int ch) const {
    return data[(static_cast<size_t>(row) * cols + col) * channels + ch];
  }
  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= a_min && p.x() <= a_max && p.y() >= b_min && p.y() <= b_max;
  }
};

struct Triplane {
  FeaturePlane xy, xz, yz;

  Triplane() = default;
  // Validates matching channel counts, shared-axis extent consistency, and
  // that all feature values are finite.
  Triplane(FeaturePlane xy_, FeaturePlane xz_, FeaturePlane yz_);

  int channels() const { return xy.channels; }
  const FeaturePlane& plane(PlaneAxes axes) const;
  FeaturePlane& plane(PlaneAxes axes);
};

// Bilinear interpolation of the plane at 2D world coords p. p must lie
// inside the extents (DomainError otherwise). At a grid node this returns
// exactly the stored feature vector.
Eigen::VectorXd bilinear_sample(const FeaturePlane& plane,
                                const Eigen::Vector2d& p);

// Sum of the three plane samples at the projections of x. DomainErrors name
// the offending plane.
Eigen::VectorXd sample_3d(const Triplane& tp, const Eigen::Vector3d& x);

// d(sample)/d(p) in world units, channels x 2. On a cell edge the derivative
// is one-sided; near_* flags report when p sits within 1e-9 of a cell
// boundary (in grid units) along each axis.
struct BilinearGradient {
  Eigen::MatrixXd jacobian;  // channels x 2
  bool near_boundary_a = false;
  bool near_boundary_b = false;
};

BilinearGradient bilinear_grad(const FeaturePlane& plane,
                               const Eigen::Vector2d& p);

// d(sample_3d)/dx, channels x 3, assembled from the three plane gradients.
struct TriplaneGradient {
  Eigen::MatrixXd jacobian;  // channels x 3
  bool near_boundary = false;
};

TriplaneGradient sample_3d_grad(const Triplane& tp, const Eigen::Vector3d& x);

// Where one reference feature vector came from.
struct RefSource {
  enum class Kind { PlaneSample, ImageSample };
  Kind kind = Kind::PlaneSample;
  PlaneAxes plane = PlaneAxes::XY;  // PlaneSample only
  int frame = -1;                   // ImageSample only
  Eigen::Vector2d coords = Eigen::Vector2d::Zero();
};

// An anchor's reference features for attention-based aggregation.
struct ReferenceSet {
  PlaneAxes anchor_plane = PlaneAxes::XY;
  Eigen::Vector2d anchor_coords = Eigen::Vector2d::Zero();
  std::vector<RefSource> sources;
  Eigen::MatrixXd features;  // sources.size() x channels
  int skipped_samples = 0;   // image samples dropped (camera-center hits)
};

// Cross-plane reference set of one plane anchor: the anchor's own feature
// plus, for each offset along the plane's orthogonal axis, one sample from
// each of the other two planes. Set size = 1 + 2 * ortho_samples.size().
// Sources are ordered anchor first, then per offset in input order; within
// an offset the two planes appear in the fixed order documented in the
// implementation. Out-of-extent samples throw DomainError.
ReferenceSet cvha_reference_set(const Triplane& tp, PlaneAxes anchor_plane,
                                const Eigen::Vector2d& anchor_coords,
                                std::span<const double> ortho_samples);

// A dense grid of per-pixel image feature vectors (bilinear lookup with
// horizontal wrap and vertical clamp, pixel centers at half-integers).
struct ImageFeatureGrid {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;  // [row][col][channel]

  ImageFeatureGrid() = default;
  ImageFeatureGrid(int width_, int height_, int channels_);
  static ImageFeatureGrid constant(int width, int height, int channels,
                                   double value);

  double& at(int row, int col, int ch) {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  double at(int row, int col, int ch) const {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  Eigen::VectorXd sample(double u, double v) const;
};

// One posed feature image for image-conditioned reference gathering.
struct IcaFrame {
  const ImageFeatureGrid* features = nullptr;
  PoseSE3 world_to_camera;
};

// Image-conditioned reference set of one plane anchor: for each orthogonal
// offset, the 3D point (anchor lifted by the offset) is projected into every
// frame and the frame's feature grid sampled there. Points that land on a
// camera center are skipped and counted. Set size =
// ortho_samples.size() * frames.size() - skipped_samples. Sources are
// ordered per offset, then per frame.
ReferenceSet ica_reference_set(const Triplane& tp, PlaneAxes anchor_plane,
                               const Eigen::Vector2d& anchor_coords,
                               std::span<const double> ortho_samples,
                               std::span<const IcaFrame> frames,
                               const EquirectGrid& grid);

}  // namespace panoepi
