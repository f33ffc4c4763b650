#pragma once

// Slow-but-obvious reference implementations and random fixture builders.
// Everything here is written independently of the main code paths (scalar
// loops, homogeneous matrices, its own trig) so the fast kernels can be
// checked against it. The reference attention kernels are serial on
// purpose; the benchmark target compares them with the parallel ones.

#include <Eigen/Core>

#include <functional>
#include <random>
#include <vector>

#include "panoepi/attention.hpp"
#include "panoepi/camera.hpp"
#include "panoepi/epipolar.hpp"
#include "panoepi/ray_attention.hpp"
#include "panoepi/sequence.hpp"
#include "panoepi/triplane.hpp"

namespace panoepi::ref {

// ---- geometry oracles ----

Eigen::Matrix4d to_homogeneous(const PoseSE3& p);
PoseSE3 from_homogeneous(const Eigen::Matrix4d& m);
// outer(inner(x)) via 4x4 matrix multiplication.
PoseSE3 compose_homogeneous(const PoseSE3& outer, const PoseSE3& inner);
PoseSE3 inverse_homogeneous(const PoseSE3& p);

// Component-wise cross product formula.
Eigen::Vector3d cross_formula(const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b);

// Viewing direction of a pixel from the raw angle formulas (no shared code
// with the camera module).
Eigen::Vector3d pixel_direction(double u, double v, int width, int height);

// Epipolar residual of two pixel centers computed from scratch.
double pixel_residual(const Eigen::Vector2d& pixel_m,
                      const Eigen::Vector2d& pixel_n, const EssentialMatrix& e,
                      const EquirectGrid& grid);

// Exhaustive candidate search: evaluates the normalized residual at every
// pixel center of the target view, finds each column's best row, and keeps
// rows within the band of it. Mirrors the documented degenerate rules
// (epipole query -> empty with *full=true; near-vertical columns kept fully
// when the column satisfies the constraint, dropped otherwise).
std::vector<EpipolarMask::Candidate> exhaustive_mask(
    const Eigen::Vector2d& pixel_m, const EssentialMatrix& e,
    const EquirectGrid& grid, int band_halfwidth, bool* full);

// Shortest distance from a point to the traced curve polyline, treating the
// horizontal axis as periodic (width-wrapping) and closing the curve.
double curve_polyline_distance(const EpipolarCurve& curve,
                               const Eigen::Vector2d& p,
                               const EquirectGrid& grid);

// ---- sampling / attention oracles ----

// Bilinear interpolation via explicit corner weights.
Eigen::VectorXd bilinear_4corner(const FeaturePlane& plane,
                                 const Eigen::Vector2d& p);
Eigen::VectorXd naive_sample_3d(const Triplane& tp, const Eigen::Vector3d& x);

// Central finite differences of bilinear_4corner.
Eigen::MatrixXd fd_bilinear_jacobian(const FeaturePlane& plane,
                                     const Eigen::Vector2d& p, double h);
Eigen::MatrixXd fd_sample_3d_jacobian(const Triplane& tp,
                                      const Eigen::Vector3d& x, double h);

// Serial scalar-loop attention (own softmax).
Eigen::MatrixXd naive_masked_attention(const Eigen::MatrixXd& queries,
                                       std::span<const Eigen::MatrixXd> kv,
                                       std::span<const QueryMask> masks,
                                       const AttentionParams& params);
Eigen::MatrixXd naive_full_attention(const Eigen::MatrixXd& queries,
                                     const Eigen::MatrixXd& kv,
                                     const AttentionParams& params);

// Serial scalar-loop ray attention built on naive_sample_3d and its own
// direction/softmax code.
Eigen::VectorXd naive_ray_attention(const Triplane& tp,
                                    const PoseSE3& cam_to_world,
                                    const Eigen::Vector2d& pixel,
                                    const EquirectGrid& grid,
                                    const RaySampleConfig& cfg,
                                    const RayAttentionParams& params);

// Central difference of a scalar function of one perturbed coordinate.
double central_diff(const std::function<double(double)>& f, double x,
                    double h);

// ---- random fixtures ----

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
Eigen::Vector3d random_unit(Rng& rng);
Eigen::Matrix3d random_rotation(Rng& rng);
PoseSE3 random_pose(Rng& rng, double translation_scale = 10.0);
Pose4DoF random_pose4dof(Rng& rng, const GroundExtent& extent,
                         double z_lo = 1.0, double z_hi = 3.0);

struct Box {
  double x_min, x_max, y_min, y_max, z_min, z_max;
};

Triplane random_triplane(Rng& rng, int rows, int cols, int channels,
                         const Box& box);
ImageFeatureGrid random_image_grid(Rng& rng, int width, int height,
                                   int channels);
Eigen::MatrixXd random_features(Rng& rng, long rows, long cols);
AttentionParams random_attention_params(Rng& rng, int channels);
RayAttentionParams random_ray_params(Rng& rng, const RaySampleConfig& cfg,
                                     int channels, double offset_scale,
                                     bool per_channel = false,
                                     bool along_ray_only = false);

}  // namespace panoepi::ref
