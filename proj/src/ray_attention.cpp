#include "panoepi/ray_attention.hpp"

#include <cmath>
#include <string>

namespace panoepi {

void RaySampleConfig::validate() const {
  if (samples < 1)
    throw DomainError("ray sample count must be >= 1, got " +
                      std::to_string(samples));
  if (heads < 1)
    throw DomainError("head count must be >= 1, got " + std::to_string(heads));
  if (!(r_min > 0.0) || !(r_min < r_max))
    throw DomainError("ray range must satisfy 0 < r_min < r_max, got [" +
                      std::to_string(r_min) + ", " + std::to_string(r_max) +
                      "]");
}

Eigen::VectorXd sample_depths(const RaySampleConfig& cfg) {
  cfg.validate();
  Eigen::VectorXd r(cfg.samples);
  if (cfg.samples == 1) {
    r[0] = cfg.r_min;
    return r;
  }
  double step = (cfg.r_max - cfg.r_min) / (cfg.samples - 1);
  for (int k = 0; k < cfg.samples; ++k) r[k] = cfg.r_min + k * step;
  return r;
}

std::vector<Eigen::Vector3d> sample_ray_points(const Eigen::Vector2d& pixel,
                                               const PoseSE3& cam_to_world,
                                               const EquirectGrid& grid,
                                               const RaySampleConfig& cfg) {
  Eigen::VectorXd r = sample_depths(cfg);
  Eigen::Vector3d d =
      cam_to_world.rotation * pixel_to_angles(pixel.x(), pixel.y(), grid).dir;
  std::vector<Eigen::Vector3d> pts(cfg.samples);
  for (int k = 0; k < cfg.samples; ++k)
    pts[k] = cam_to_world.translation + r[k] * d;
  return pts;
}

RayAttentionParams RayAttentionParams::zero_init(const RaySampleConfig& cfg) {
  cfg.validate();
  RayAttentionParams p;
  p.head_weights = Eigen::MatrixXd::Ones(cfg.heads, 1);
  p.logits = Eigen::MatrixXd::Zero(cfg.samples, cfg.heads);
  p.offsets = Eigen::MatrixXd::Zero(cfg.samples * cfg.heads, 3);
  return p;
}

Eigen::MatrixXd RayAttentionParams::attention_weights() const {
  Eigen::MatrixXd a(logits.rows(), logits.cols());
  for (int j = 0; j < logits.cols(); ++j) {
    double mx = logits.col(j).maxCoeff();
    a.col(j) = (logits.col(j).array() - mx).exp();
    a.col(j) /= a.col(j).sum();
  }
  return a;
}

void RayAttentionParams::validate(const RaySampleConfig& cfg,
                                  int channels) const {
  cfg.validate();
  if (logits.rows() != cfg.samples || logits.cols() != cfg.heads)
    throw ShapeError("logits must be " + std::to_string(cfg.samples) + "x" +
                     std::to_string(cfg.heads) + ", got " +
                     std::to_string(logits.rows()) + "x" +
                     std::to_string(logits.cols()));
  if (offsets.rows() != static_cast<long>(cfg.samples) * cfg.heads ||
      offsets.cols() != 3)
    throw ShapeError("offsets must be " +
                     std::to_string(cfg.samples * cfg.heads) + "x3, got " +
                     std::to_string(offsets.rows()) + "x" +
                     std::to_string(offsets.cols()));
  long expect_cols = per_channel ? channels : 1;
  if (head_weights.rows() != cfg.heads || head_weights.cols() != expect_cols)
    throw ShapeError("head weights must be " + std::to_string(cfg.heads) +
                     "x" + std::to_string(expect_cols) + ", got " +
                     std::to_string(head_weights.rows()) + "x" +
                     std::to_string(head_weights.cols()));
  for (const Eigen::MatrixXd* m : {&head_weights, &logits, &offsets})
    if (!m->allFinite())
      throw DomainError("ray attention parameters contain non-finite values");
}

namespace {

struct RayBasis {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // unit, world frame
};

RayBasis ray_basis(const Eigen::Vector2d& pixel, const PoseSE3& cam_to_world,
                   const EquirectGrid& grid) {
  return {cam_to_world.translation,
          cam_to_world.rotation *
              pixel_to_angles(pixel.x(), pixel.y(), grid).dir};
}

Eigen::Vector3d effective_offset(const RayAttentionParams& params,
                                 const Eigen::Vector3d& dir, int k, int j) {
  Eigen::Vector3d delta = params.offset(k, j);
  if (params.along_ray_only) delta = delta.dot(dir) * dir;
  return delta;
}

// dL/dS_j for one head: the head weight applied to dL/dout.
Eigen::VectorXd head_pullback(const RayAttentionParams& params, int j,
                              const Eigen::VectorXd& dloss_dout) {
  if (params.per_channel)
    return params.head_weights.row(j).transpose().cwiseProduct(dloss_dout);
  return params.head_weights(j, 0) * dloss_dout;
}

[[noreturn]] void rethrow_with_sample(const DomainError& e, int k, int j) {
  throw DomainError("ray sample k=" + std::to_string(k) + ", head j=" +
                    std::to_string(j) + ": " + e.what());
}

}  // namespace

RayTrace trace_ray_pixel_attention(const Triplane& tp,
                                   const PoseSE3& cam_to_world,
                                   const Eigen::Vector2d& pixel,
                                   const EquirectGrid& grid,
                                   const RaySampleConfig& cfg,
                                   const RayAttentionParams& params) {
  params.validate(cfg, tp.channels());
  const int kk = cfg.samples, jj = cfg.heads, c = tp.channels();

  RayTrace t;
  t.depths = sample_depths(cfg);
  RayBasis basis = ray_basis(pixel, cam_to_world, grid);
  t.points.resize(kk);
  for (int k = 0; k < kk; ++k)
    t.points[k] = basis.origin + t.depths[k] * basis.dir;
  t.attention = params.attention_weights();
  t.sample_points.resize(static_cast<size_t>(kk) * jj);
  t.sample_features.resize(static_cast<long>(kk) * jj, c);

  for (int k = 0; k < kk; ++k)
    for (int j = 0; j < jj; ++j) {
      Eigen::Vector3d p =
          t.points[k] + effective_offset(params, basis.dir, k, j);
      t.sample_points[static_cast<size_t>(k) * jj + j] = p;
      try {
        t.sample_features.row(static_cast<long>(k) * jj + j) =
            sample_3d(tp, p).transpose();
      } catch (const DomainError& e) {
        rethrow_with_sample(e, k, j);
      }
    }

  t.feature = Eigen::VectorXd::Zero(c);
  for (int j = 0; j < jj; ++j) {
    Eigen::VectorXd head_sum = Eigen::VectorXd::Zero(c);
    for (int k = 0; k < kk; ++k)
      head_sum += t.attention(k, j) *
                  t.sample_features.row(static_cast<long>(k) * jj + j)
                      .transpose();
    if (params.per_channel)
      t.feature += params.head_weights.row(j).transpose().cwiseProduct(head_sum);
    else
      t.feature += params.head_weights(j, 0) * head_sum;
  }
  return t;
}

Eigen::VectorXd ray_pixel_attention(const Triplane& tp,
                                    const PoseSE3& cam_to_world,
                                    const Eigen::Vector2d& pixel,
                                    const EquirectGrid& grid,
                                    const RaySampleConfig& cfg,
                                    const RayAttentionParams& params) {
  return trace_ray_pixel_attention(tp, cam_to_world, pixel, grid, cfg, params)
      .feature;
}

RayAttentionGrads ray_attention_grad(const Triplane& tp,
                                     const PoseSE3& cam_to_world,
                                     const Eigen::Vector2d& pixel,
                                     const EquirectGrid& grid,
                                     const RaySampleConfig& cfg,
                                     const RayAttentionParams& params,
                                     const Eigen::VectorXd& dloss_dout) {
  params.validate(cfg, tp.channels());
  if (dloss_dout.size() != tp.channels())
    throw ShapeError("dL/dout size " + std::to_string(dloss_dout.size()) +
                     " differs from channel count " +
                     std::to_string(tp.channels()));
  const int kk = cfg.samples, jj = cfg.heads;

  Eigen::VectorXd depths = sample_depths(cfg);
  RayBasis basis = ray_basis(pixel, cam_to_world, grid);
  Eigen::MatrixXd a = params.attention_weights();

  RayAttentionGrads g;
  g.logit_grads = Eigen::MatrixXd::Zero(kk, jj);
  g.offset_grads = Eigen::MatrixXd::Zero(static_cast<long>(kk) * jj, 3);

  for (int j = 0; j < jj; ++j) {
    Eigen::VectorXd gbar = head_pullback(params, j, dloss_dout);

    // Forward pass for this head (features and spatial Jacobians).
    Eigen::MatrixXd feats(kk, tp.channels());
    std::vector<TriplaneGradient> jacs(kk);
    for (int k = 0; k < kk; ++k) {
      Eigen::Vector3d p = basis.origin + depths[k] * basis.dir +
                          effective_offset(params, basis.dir, k, j);
      try {
        feats.row(k) = sample_3d(tp, p).transpose();
        jacs[k] = sample_3d_grad(tp, p);
      } catch (const DomainError& e) {
        rethrow_with_sample(e, k, j);
      }
      if (jacs[k].near_boundary) ++g.boundary_samples;
    }

    // Softmax pullback: dL/dlogit_k = A_k (gbar.F_k - gbar.S), S = sum A F.
    Eigen::VectorXd dots(kk);
    for (int k = 0; k < kk; ++k) dots[k] = gbar.dot(feats.row(k).transpose());
    double mean = a.col(j).dot(dots);
    for (int k = 0; k < kk; ++k) {
      g.logit_grads(k, j) = a(k, j) * (dots[k] - mean);
      Eigen::Vector3d go = a(k, j) * (jacs[k].jacobian.transpose() * gbar);
      // The along-ray projector is its own transpose.
      if (params.along_ray_only) go = go.dot(basis.dir) * basis.dir;
      g.offset_grads.row(static_cast<long>(k) * jj + j) = go.transpose();
    }
  }
  return g;
}

RayAttentionParams refine_step(const RayAttentionParams& params,
                               const RayAttentionGrads& grads, double step) {
  if (!(step > 0.0))
    throw DomainError("refine step must be positive, got " +
                      std::to_string(step));
  if (grads.logit_grads.rows() != params.logits.rows() ||
      grads.logit_grads.cols() != params.logits.cols() ||
      grads.offset_grads.rows() != params.offsets.rows())
    throw ShapeError("gradient shapes do not match the parameters");
  RayAttentionParams next = params;
  next.logits -= step * grads.logit_grads;
  next.offsets -= step * grads.offset_grads;
  return next;
}

}  // namespace panoepi
