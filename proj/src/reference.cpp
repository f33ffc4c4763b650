#include "panoepi/reference.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>

namespace panoepi::ref {

Eigen::Matrix4d to_homogeneous(const PoseSE3& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation;
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

PoseSE3 from_homogeneous(const Eigen::Matrix4d& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

PoseSE3 compose_homogeneous(const PoseSE3& outer, const PoseSE3& inner) {
  return from_homogeneous(to_homogeneous(outer) * to_homogeneous(inner));
}

PoseSE3 inverse_homogeneous(const PoseSE3& p) {
  return from_homogeneous(to_homogeneous(p).inverse());
}

Eigen::Vector3d cross_formula(const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  return {a.y() * b.z() - a.z() * b.y(),
          a.z() * b.x() - a.x() * b.z(),
          a.x() * b.y() - a.y() * b.x()};
}

Eigen::Vector3d pixel_direction(double u, double v, int width, int height) {
  double psi = 2.0 * kPi * (u - width / 2.0) / width;
  double theta = kPi * (height / 2.0 - v) / height;
  return {std::cos(theta) * std::cos(psi), std::cos(theta) * std::sin(psi),
          std::sin(theta)};
}

double pixel_residual(const Eigen::Vector2d& pixel_m,
                      const Eigen::Vector2d& pixel_n, const EssentialMatrix& e,
                      const EquirectGrid& grid) {
  Eigen::Vector3d dm =
      pixel_direction(pixel_m.x(), pixel_m.y(), grid.width, grid.height);
  Eigen::Vector3d dn =
      pixel_direction(pixel_n.x(), pixel_n.y(), grid.width, grid.height);
  double r = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r += dn[i] * e.e(i, j) * dm[j];
  return r;
}

std::vector<EpipolarMask::Candidate> exhaustive_mask(
    const Eigen::Vector2d& pixel_m, const EssentialMatrix& e,
    const EquirectGrid& grid, int band_halfwidth, bool* full) {
  const int w = grid.width, h = grid.height;
  std::vector<EpipolarMask::Candidate> out;
  if (full) *full = false;

  Eigen::Vector3d dm =
      pixel_direction(pixel_m.x(), pixel_m.y(), w, h);
  Eigen::Vector3d n = e.e * dm;
  if (n.norm() <= 1e-12 * e.baseline.norm()) {
    if (full) *full = true;
    return out;
  }
  Eigen::Vector3d nh = n.normalized();

  for (int col = 0; col < w; ++col) {
    double psi = 2.0 * kPi * (col + 0.5 - w / 2.0) / w;
    double c = nh.x() * std::cos(psi) + nh.y() * std::sin(psi);
    if (std::abs(nh.z()) < 1e-9) {
      if (std::abs(c) < 1e-9)
        for (int row = 0; row < h; ++row) out.push_back({col, row});
      continue;
    }
    // Scan every row of the column for the smallest |residual|.
    int best = 0;
    double best_res = std::numeric_limits<double>::infinity();
    for (int row = 0; row < h; ++row) {
      double theta = kPi * (h / 2.0 - (row + 0.5)) / h;
      double res = std::abs(c * std::cos(theta) + nh.z() * std::sin(theta));
      if (res < best_res) {
        best_res = res;
        best = row;
      }
    }
    for (int row = std::max(0, best - band_halfwidth);
         row <= std::min(h - 1, best + band_halfwidth); ++row)
      out.push_back({col, row});
  }
  return out;
}

namespace {

double point_segment_distance(const Eigen::Vector2d& p,
                              const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  Eigen::Vector2d ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

double curve_polyline_distance(const EpipolarCurve& curve,
                               const Eigen::Vector2d& p,
                               const EquirectGrid& grid) {
  const auto& pts = curve.points;
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    for (double shift : {-1.0, 0.0, 1.0}) {
      Eigen::Vector2d q(p.x() + shift * grid.width, p.y());
      best = std::min(best, point_segment_distance(q, a, b));
    }
  };
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    consider({pts[i].u, pts[i].v}, {pts[i + 1].u, pts[i + 1].v});
  // Close the curve across the seam.
  consider({pts.back().u, pts.back().v},
           {pts.front().u + grid.width, pts.front().v});
  return best;
}

Eigen::VectorXd bilinear_4corner(const FeaturePlane& plane,
                                 const Eigen::Vector2d& p) {
  double ga = (p.x() - plane.a_min) / (plane.a_max - plane.a_min) *
              (plane.cols - 1);
  double gb = (p.y() - plane.b_min) / (plane.b_max - plane.b_min) *
              (plane.rows - 1);
  int ia = std::clamp(static_cast<int>(std::floor(ga)), 0, plane.cols - 2);
  int ib = std::clamp(static_cast<int>(std::floor(gb)), 0, plane.rows - 2);
  double fa = ga - ia, fb = gb - ib;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(plane.channels);
  const double weights[4] = {(1 - fa) * (1 - fb), fa * (1 - fb),
                             (1 - fa) * fb, fa * fb};
  const int corners[4][2] = {{ib, ia}, {ib, ia + 1}, {ib + 1, ia},
                             {ib + 1, ia + 1}};
  for (int i = 0; i < 4; ++i)
    for (int ch = 0; ch < plane.channels; ++ch)
      out[ch] += weights[i] * plane.at(corners[i][0], corners[i][1], ch);
  return out;
}

Eigen::VectorXd naive_sample_3d(const Triplane& tp, const Eigen::Vector3d& x) {
  return bilinear_4corner(tp.xy, {x.x(), x.y()}) +
         bilinear_4corner(tp.xz, {x.x(), x.z()}) +
         bilinear_4corner(tp.yz, {x.y(), x.z()});
}

Eigen::MatrixXd fd_bilinear_jacobian(const FeaturePlane& plane,
                                     const Eigen::Vector2d& p, double h) {
  Eigen::MatrixXd jac(plane.channels, 2);
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::Vector2d hi = p, lo = p;
    hi[axis] += h;
    lo[axis] -= h;
    jac.col(axis) =
        (bilinear_4corner(plane, hi) - bilinear_4corner(plane, lo)) / (2 * h);
  }
  return jac;
}

Eigen::MatrixXd fd_sample_3d_jacobian(const Triplane& tp,
                                      const Eigen::Vector3d& x, double h) {
  Eigen::MatrixXd jac(tp.channels(), 3);
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::Vector3d hi = x, lo = x;
    hi[axis] += h;
    lo[axis] -= h;
    jac.col(axis) = (naive_sample_3d(tp, hi) - naive_sample_3d(tp, lo)) /
                    (2 * h);
  }
  return jac;
}

namespace {

// y = W x with scalar loops.
Eigen::VectorXd matvec(const Eigen::MatrixXd& w, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(w.rows());
  for (long i = 0; i < w.rows(); ++i)
    for (long j = 0; j < w.cols(); ++j) y[i] += w(i, j) * x[j];
  return y;
}

std::vector<double> softmax_scalar(const std::vector<double>& s) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : s) mx = std::max(mx, v);
  std::vector<double> e(s.size());
  double denom = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i] - mx);
    denom += e[i];
  }
  for (double& v : e) v /= denom;
  return e;
}

}  // namespace

Eigen::MatrixXd naive_masked_attention(const Eigen::MatrixXd& queries,
                                       std::span<const Eigen::MatrixXd> kv,
                                       std::span<const QueryMask> masks,
                                       const AttentionParams& params) {
  const long p = queries.rows();
  const int c = static_cast<int>(queries.cols());
  Eigen::MatrixXd out(p, c);
  for (long q = 0; q < p; ++q) {
    if (masks[q].empty()) {
      out.row(q) = matvec(params.wv, queries.row(q).transpose()).transpose();
      continue;
    }
    Eigen::VectorXd qp = matvec(params.wq, queries.row(q).transpose());
    std::vector<double> scores(masks[q].size());
    for (size_t i = 0; i < masks[q].size(); ++i) {
      const CandidateRef& cand = masks[q][i];
      Eigen::VectorXd kp =
          matvec(params.wk, kv[cand.frame].row(cand.index).transpose());
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) s += qp[ch] * kp[ch];
      scores[i] = s / std::sqrt(params.scale);
    }
    std::vector<double> alpha = softmax_scalar(scores);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(c);
    for (size_t i = 0; i < masks[q].size(); ++i) {
      const CandidateRef& cand = masks[q][i];
      Eigen::VectorXd vp =
          matvec(params.wv, kv[cand.frame].row(cand.index).transpose());
      for (int ch = 0; ch < c; ++ch) acc[ch] += alpha[i] * vp[ch];
    }
    out.row(q) = acc.transpose();
  }
  return out;
}

Eigen::MatrixXd naive_full_attention(const Eigen::MatrixXd& queries,
                                     const Eigen::MatrixXd& kv,
                                     const AttentionParams& params) {
  QueryMask all(kv.rows());
  for (long i = 0; i < kv.rows(); ++i)
    all[i] = {0, static_cast<std::int32_t>(i)};
  std::vector<QueryMask> masks(queries.rows(), all);
  std::vector<Eigen::MatrixXd> kvs{kv};
  return naive_masked_attention(queries, kvs, masks, params);
}

Eigen::VectorXd naive_ray_attention(const Triplane& tp,
                                    const PoseSE3& cam_to_world,
                                    const Eigen::Vector2d& pixel,
                                    const EquirectGrid& grid,
                                    const RaySampleConfig& cfg,
                                    const RayAttentionParams& params) {
  Eigen::Vector3d dir =
      cam_to_world.rotation *
      pixel_direction(pixel.x(), pixel.y(), grid.width, grid.height);
  const int kk = cfg.samples, jj = cfg.heads, c = tp.channels();

  Eigen::VectorXd out = Eigen::VectorXd::Zero(c);
  for (int j = 0; j < jj; ++j) {
    std::vector<double> logits(kk);
    for (int k = 0; k < kk; ++k) logits[k] = params.logits(k, j);
    std::vector<double> alpha = softmax_scalar(logits);
    Eigen::VectorXd head = Eigen::VectorXd::Zero(c);
    for (int k = 0; k < kk; ++k) {
      double r = cfg.samples == 1
                     ? cfg.r_min
                     : cfg.r_min + k * (cfg.r_max - cfg.r_min) /
                                       (cfg.samples - 1);
      Eigen::Vector3d delta = params.offset(k, j);
      if (params.along_ray_only) delta = delta.dot(dir) * dir;
      Eigen::Vector3d p = cam_to_world.translation + r * dir + delta;
      head += alpha[k] * naive_sample_3d(tp, p);
    }
    for (int ch = 0; ch < c; ++ch)
      out[ch] += (params.per_channel ? params.head_weights(j, ch)
                                     : params.head_weights(j, 0)) *
                 head[ch];
  }
  return out;
}

double central_diff(const std::function<double(double)>& f, double x,
                    double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Vector3d random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = n(rng);
  } while (q.norm() < 1e-6);
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

PoseSE3 random_pose(Rng& rng, double translation_scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {random_rotation(rng),
          translation_scale * Eigen::Vector3d(n(rng), n(rng), n(rng))};
}

Pose4DoF random_pose4dof(Rng& rng, const GroundExtent& extent, double z_lo,
                         double z_hi) {
  return {{uniform(rng, extent.x_min, extent.x_max),
           uniform(rng, extent.y_min, extent.y_max), uniform(rng, z_lo, z_hi)},
          uniform(rng, -kPi, kPi)};
}

Triplane random_triplane(Rng& rng, int rows, int cols, int channels,
                         const Box& box) {
  FeaturePlane xy(PlaneAxes::XY, rows, cols, channels, box.x_min, box.x_max,
                  box.y_min, box.y_max);
  FeaturePlane xz(PlaneAxes::XZ, rows, cols, channels, box.x_min, box.x_max,
                  box.z_min, box.z_max);
  FeaturePlane yz(PlaneAxes::YZ, rows, cols, channels, box.y_min, box.y_max,
                  box.z_min, box.z_max);
  std::normal_distribution<double> n(0.0, 1.0);
  for (FeaturePlane* p : {&xy, &xz, &yz})
    for (double& v : p->data) v = n(rng);
  return {std::move(xy), std::move(xz), std::move(yz)};
}

ImageFeatureGrid random_image_grid(Rng& rng, int width, int height,
                                   int channels) {
  ImageFeatureGrid g(width, height, channels);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : g.data) v = n(rng);
  return g;
}

Eigen::MatrixXd random_features(Rng& rng, long rows, long cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

AttentionParams random_attention_params(Rng& rng, int channels) {
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(channels));
  AttentionParams p;
  for (Eigen::MatrixXd* w : {&p.wq, &p.wk, &p.wv}) {
    w->resize(channels, channels);
    for (long r = 0; r < channels; ++r)
      for (long c = 0; c < channels; ++c) (*w)(r, c) = n(rng);
  }
  p.scale = channels;
  return p;
}

RayAttentionParams random_ray_params(Rng& rng, const RaySampleConfig& cfg,
                                     int channels, double offset_scale,
                                     bool per_channel, bool along_ray_only) {
  RayAttentionParams p;
  std::normal_distribution<double> n(0.0, 1.0);
  p.per_channel = per_channel;
  p.along_ray_only = along_ray_only;
  p.head_weights.resize(cfg.heads, per_channel ? channels : 1);
  for (long r = 0; r < p.head_weights.rows(); ++r)
    for (long c = 0; c < p.head_weights.cols(); ++c)
      p.head_weights(r, c) = uniform(rng, 0.5, 1.5);
  p.logits.resize(cfg.samples, cfg.heads);
  for (long r = 0; r < p.logits.rows(); ++r)
    for (long c = 0; c < p.logits.cols(); ++c) p.logits(r, c) = n(rng);
  p.offsets.resize(static_cast<long>(cfg.samples) * cfg.heads, 3);
  for (long r = 0; r < p.offsets.rows(); ++r)
    for (long c = 0; c < 3; ++c)
      p.offsets(r, c) = offset_scale * uniform(rng, -1.0, 1.0);
  return p;
}

}  // namespace panoepi::ref
