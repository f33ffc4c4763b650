#pragma once

// Ray-based pixel attention: a pixel's feature is gathered by walking its
// viewing ray through the triplane volume. K points are placed evenly in
// [r_min, r_max] along the ray; each of J heads perturbs every point by a
// learnable 3D offset, samples the triplane there, and blends the K samples
// with per-head softmax weights; head outputs are combined by head weights:
//
//   out = sum_j W_j * sum_k A(k, j) * sample_3d(x_k + offset(k, j))
//
// with A(:, j) = softmax over k of the head's logits.

#include <Eigen/Core>

#include <vector>

#include "panoepi/camera.hpp"
#include "panoepi/triplane.hpp"

namespace panoepi {

struct RaySampleConfig {
  int samples = 32;    // K, points along the ray
  int heads = 4;       // J
  double r_min = 1.0;  // meters
  double r_max = 100.0;

  void validate() const;  // K >= 1, J >= 1, 0 < r_min < r_max
};

// Depths of the K ray points: evenly spaced in [r_min, r_max], r_min and
// r_max included (K = 1 uses r_min).
Eigen::VectorXd sample_depths(const RaySampleConfig& cfg);

// 3D ray points for a pixel of a posed panorama (camera-to-world pose).
std::vector<Eigen::Vector3d> sample_ray_points(const Eigen::Vector2d& pixel,
                                               const PoseSE3& cam_to_world,
                                               const EquirectGrid& grid,
                                               const RaySampleConfig& cfg);

struct RayAttentionParams {
  // One weight per head, or one weight per head and channel when
  // per_channel is set (heads x 1 or heads x channels).
  Eigen::MatrixXd head_weights;
  Eigen::MatrixXd logits;   // samples x heads
  Eigen::MatrixXd offsets;  // (samples * heads) x 3, row k * heads + j
  // Restrict effective offsets to the ray direction (the component
  // orthogonal to the ray is projected out).
  bool along_ray_only = false;
  bool per_channel = false;

  // Unit head weights, zero logits (uniform attention), zero offsets.
  static RayAttentionParams zero_init(const RaySampleConfig& cfg);

  Eigen::Vector3d offset(int k, int j) const {
    return offsets.row(k * static_cast<int>(logits.cols()) + j).transpose();
  }
  // Per-head softmax over the K logits; columns sum to 1.
  Eigen::MatrixXd attention_weights() const;
  void validate(const RaySampleConfig& cfg, int channels) const;
};

// Feature vector gathered for one pixel. Out-of-extent perturbed samples
// throw DomainError naming the ray sample and head.
Eigen::VectorXd ray_pixel_attention(const Triplane& tp,
                                    const PoseSE3& cam_to_world,
                                    const Eigen::Vector2d& pixel,
                                    const EquirectGrid& grid,
                                    const RaySampleConfig& cfg,
                                    const RayAttentionParams& params);

// Everything ray_pixel_attention computes, kept for inspection.
struct RayTrace {
  Eigen::VectorXd depths;                 // K
  std::vector<Eigen::Vector3d> points;    // K, unperturbed
  Eigen::MatrixXd attention;              // K x J
  std::vector<Eigen::Vector3d> sample_points;  // K*J, perturbed, row k*J+j
  Eigen::MatrixXd sample_features;        // (K*J) x C
  Eigen::VectorXd feature;                // C, the blended output
};

RayTrace trace_ray_pixel_attention(const Triplane& tp,
                                   const PoseSE3& cam_to_world,
                                   const Eigen::Vector2d& pixel,
                                   const EquirectGrid& grid,
                                   const RaySampleConfig& cfg,
                                   const RayAttentionParams& params);

// Gradients of loss L with respect to the logits and offsets, given
// dL/d(out). Offsets on a sampling-cell boundary have one-sided spatial
// derivatives; boundary_samples counts them.
struct RayAttentionGrads {
  Eigen::MatrixXd logit_grads;   // samples x heads
  Eigen::MatrixXd offset_grads;  // (samples * heads) x 3
  int boundary_samples = 0;
};

RayAttentionGrads ray_attention_grad(const Triplane& tp,
                                     const PoseSE3& cam_to_world,
                                     const Eigen::Vector2d& pixel,
                                     const EquirectGrid& grid,
                                     const RaySampleConfig& cfg,
                                     const RayAttentionParams& params,
                                     const Eigen::VectorXd& dloss_dout);

// One gradient-descent step on logits and offsets (head weights are left
// untouched). step must be positive.
RayAttentionParams refine_step(const RayAttentionParams& params,
                               const RayAttentionGrads& grads, double step);

}  // namespace panoepi
