#include "panoepi/triplane.hpp"

#include <algorithm>
#include <cmath>

namespace panoepi {

namespace {

// Grid-unit distance to a cell boundary below which the gradient flags are
// raised (the bilinear derivative is discontinuous there).
constexpr double kBoundaryEps = 1e-9;

void check_extent(double lo, double hi, const char* axis, PlaneAxes axes) {
  if (!(lo < hi))
    throw DomainError(std::string("plane ") + plane_name(axes) +
                      ": empty extent on axis " + axis);
}

// 3D point with `anchor_coords` on the anchor plane and `offset` along the
// plane's orthogonal axis.
Eigen::Vector3d lift(PlaneAxes anchor, const Eigen::Vector2d& c,
                     double offset) {
  switch (anchor) {
    case PlaneAxes::XY: return {c.x(), c.y(), offset};
    case PlaneAxes::XZ: return {c.x(), offset, c.y()};
    case PlaneAxes::YZ: return {offset, c.x(), c.y()};
  }
  return Eigen::Vector3d::Zero();
}

struct CellLookup {
  int i0, i1;     // bracketing node indices
  double frac;    // in [0, 1]
  bool near_edge;
};

CellLookup locate(double x, double lo, double hi, int nodes) {
  double g = (x - lo) / (hi - lo) * (nodes - 1);
  int i0 = std::clamp(static_cast<int>(std::floor(g)), 0, nodes - 2);
  double f = g - i0;
  bool near = f < kBoundaryEps || f > 1.0 - kBoundaryEps;
  return {i0, i0 + 1, f, near};
}

}  // namespace

const char* plane_name(PlaneAxes axes) {
  switch (axes) {
    case PlaneAxes::XY: return "xy";
    case PlaneAxes::XZ: return "xz";
    case PlaneAxes::YZ: return "yz";
  }
  return "?";
}

Eigen::Vector2d plane_coords(PlaneAxes axes, const Eigen::Vector3d& x) {
  switch (axes) {
    case PlaneAxes::XY: return {x.x(), x.y()};
    case PlaneAxes::XZ: return {x.x(), x.z()};
    case PlaneAxes::YZ: return {x.y(), x.z()};
  }
  return Eigen::Vector2d::Zero();
}

FeaturePlane::FeaturePlane(PlaneAxes axes_, int rows_, int cols_,
                           int channels_, double a_min_, double a_max_,
                           double b_min_, double b_max_)
    : axes(axes_), rows(rows_), cols(cols_), channels(channels_),
      a_min(a_min_), a_max(a_max_), b_min(b_min_), b_max(b_max_) {
  if (rows < 2 || cols < 2)
    throw DomainError(std::string("plane ") + plane_name(axes) +
                      " needs at least 2x2 nodes, got " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  if (channels < 1)
    throw DomainError("plane channel count must be >= 1");
  check_extent(a_min, a_max, "a", axes);
  check_extent(b_min, b_max, "b", axes);
  data.assign(static_cast<size_t>(rows) * cols * channels, 0.0);
}

Triplane::Triplane(FeaturePlane xy_, FeaturePlane xz_, FeaturePlane yz_)
    : xy(std::move(xy_)), xz(std::move(xz_)), yz(std::move(yz_)) {
  xy.axes = PlaneAxes::XY;
  xz.axes = PlaneAxes::XZ;
  yz.axes = PlaneAxes::YZ;
  if (xy.channels != xz.channels || xy.channels != yz.channels)
    throw ShapeError("triplane channel counts differ: xy=" +
                     std::to_string(xy.channels) + " xz=" +
                     std::to_string(xz.channels) + " yz=" +
                     std::to_string(yz.channels));
  auto same = [](double a, double b) { return a == b; };
  // Shared world axes must agree across planes: x on xy/xz, y on xy/yz,
  // z on xz/yz.
  if (!same(xy.a_min, xz.a_min) || !same(xy.a_max, xz.a_max))
    throw ShapeError("x extent differs between xy and xz planes");
  if (!same(xy.b_min, yz.a_min) || !same(xy.b_max, yz.a_max))
    throw ShapeError("y extent differs between xy and yz planes");
  if (!same(xz.b_min, yz.b_min) || !same(xz.b_max, yz.b_max))
    throw ShapeError("z extent differs between xz and yz planes");
  for (const FeaturePlane* p : {&xy, &xz, &yz})
    for (double v : p->data)
      if (!std::isfinite(v))
        throw DomainError(std::string("plane ") + plane_name(p->axes) +
                          " contains a non-finite feature value");
}

const FeaturePlane& Triplane::plane(PlaneAxes axes) const {
  switch (axes) {
    case PlaneAxes::XY: return xy;
    case PlaneAxes::XZ: return xz;
    case PlaneAxes::YZ: return yz;
  }
  return xy;
}

FeaturePlane& Triplane::plane(PlaneAxes axes) {
  switch (axes) {
    case PlaneAxes::XY: return xy;
    case PlaneAxes::XZ: return xz;
    case PlaneAxes::YZ: return yz;
  }
  return xy;
}

Eigen::VectorXd bilinear_sample(const FeaturePlane& plane,
                                const Eigen::Vector2d& p) {
  if (!plane.contains(p))
    throw DomainError(std::string("sample (") + std::to_string(p.x()) + ", " +
                      std::to_string(p.y()) + ") outside " +
                      plane_name(plane.axes) + " plane extents [" +
                      std::to_string(plane.a_min) + ", " +
                      std::to_string(plane.a_max) + "] x [" +
                      std::to_string(plane.b_min) + ", " +
                      std::to_string(plane.b_max) + "]");
  CellLookup ca = locate(p.x(), plane.a_min, plane.a_max, plane.cols);
  CellLookup cb = locate(p.y(), plane.b_min, plane.b_max, plane.rows);
  double w00 = (1.0 - ca.frac) * (1.0 - cb.frac);
  double w10 = ca.frac * (1.0 - cb.frac);
  double w01 = (1.0 - ca.frac) * cb.frac;
  double w11 = ca.frac * cb.frac;
  Eigen::VectorXd out(plane.channels);
  for (int ch = 0; ch < plane.channels; ++ch)
    out[ch] = w00 * plane.at(cb.i0, ca.i0, ch) +
              w10 * plane.at(cb.i0, ca.i1, ch) +
              w01 * plane.at(cb.i1, ca.i0, ch) +
              w11 * plane.at(cb.i1, ca.i1, ch);
  return out;
}

Eigen::VectorXd sample_3d(const Triplane& tp, const Eigen::Vector3d& x) {
  // Sequenced statements (not one `+` expression) so an out-of-extent point
  // is reported against the same plane on every compiler.
  Eigen::VectorXd out = bilinear_sample(tp.xy, plane_coords(PlaneAxes::XY, x));
  out += bilinear_sample(tp.xz, plane_coords(PlaneAxes::XZ, x));
  out += bilinear_sample(tp.yz, plane_coords(PlaneAxes::YZ, x));
  return out;
}

BilinearGradient bilinear_grad(const FeaturePlane& plane,
                               const Eigen::Vector2d& p) {
  if (!plane.contains(p))
    throw DomainError(std::string("gradient point outside ") +
                      plane_name(plane.axes) + " plane extents");
  CellLookup ca = locate(p.x(), plane.a_min, plane.a_max, plane.cols);
  CellLookup cb = locate(p.y(), plane.b_min, plane.b_max, plane.rows);
  // Grid-unit derivatives scaled back to world units.
  double sa = (plane.cols - 1) / (plane.a_max - plane.a_min);
  double sb = (plane.rows - 1) / (plane.b_max - plane.b_min);
  BilinearGradient g;
  g.jacobian.resize(plane.channels, 2);
  g.near_boundary_a = ca.near_edge;
  g.near_boundary_b = cb.near_edge;
  for (int ch = 0; ch < plane.channels; ++ch) {
    double f00 = plane.at(cb.i0, ca.i0, ch), f10 = plane.at(cb.i0, ca.i1, ch);
    double f01 = plane.at(cb.i1, ca.i0, ch), f11 = plane.at(cb.i1, ca.i1, ch);
    g.jacobian(ch, 0) =
        sa * ((1.0 - cb.frac) * (f10 - f00) + cb.frac * (f11 - f01));
    g.jacobian(ch, 1) =
        sb * ((1.0 - ca.frac) * (f01 - f00) + ca.frac * (f11 - f10));
  }
  return g;
}

TriplaneGradient sample_3d_grad(const Triplane& tp, const Eigen::Vector3d& x) {
  BilinearGradient gxy = bilinear_grad(tp.xy, plane_coords(PlaneAxes::XY, x));
  BilinearGradient gxz = bilinear_grad(tp.xz, plane_coords(PlaneAxes::XZ, x));
  BilinearGradient gyz = bilinear_grad(tp.yz, plane_coords(PlaneAxes::YZ, x));
  TriplaneGradient g;
  g.jacobian.resize(tp.channels(), 3);
  g.jacobian.col(0) = gxy.jacobian.col(0) + gxz.jacobian.col(0);
  g.jacobian.col(1) = gxy.jacobian.col(1) + gyz.jacobian.col(0);
  g.jacobian.col(2) = gxz.jacobian.col(1) + gyz.jacobian.col(1);
  g.near_boundary = gxy.near_boundary_a || gxy.near_boundary_b ||
                    gxz.near_boundary_a || gxz.near_boundary_b ||
                    gyz.near_boundary_a || gyz.near_boundary_b;
  return g;
}

ReferenceSet cvha_reference_set(const Triplane& tp, PlaneAxes anchor_plane,
                                const Eigen::Vector2d& anchor_coords,
                                std::span<const double> ortho_samples) {
  ReferenceSet set;
  set.anchor_plane = anchor_plane;
  set.anchor_coords = anchor_coords;

  // The two planes other than the anchor's, in xy < xz < yz order.
  PlaneAxes others[2];
  switch (anchor_plane) {
    case PlaneAxes::XY: others[0] = PlaneAxes::XZ; others[1] = PlaneAxes::YZ; break;
    case PlaneAxes::XZ: others[0] = PlaneAxes::XY; others[1] = PlaneAxes::YZ; break;
    case PlaneAxes::YZ: others[0] = PlaneAxes::XY; others[1] = PlaneAxes::XZ; break;
  }

  size_t n = 1 + 2 * ortho_samples.size();
  set.sources.reserve(n);
  set.features.resize(n, tp.channels());

  set.sources.push_back({RefSource::Kind::PlaneSample, anchor_plane, -1,
                         anchor_coords});
  set.features.row(0) =
      bilinear_sample(tp.plane(anchor_plane), anchor_coords).transpose();

  size_t i = 1;
  for (double offset : ortho_samples) {
    Eigen::Vector3d x = lift(anchor_plane, anchor_coords, offset);
    for (PlaneAxes axes : others) {
      Eigen::Vector2d c = plane_coords(axes, x);
      set.sources.push_back({RefSource::Kind::PlaneSample, axes, -1, c});
      set.features.row(i++) = bilinear_sample(tp.plane(axes), c).transpose();
    }
  }
  return set;
}

ImageFeatureGrid::ImageFeatureGrid(int width_, int height_, int channels_)
    : width(width_), height(height_), channels(channels_) {
  if (width < 1 || height < 1 || channels < 1)
    throw DomainError("image feature grid dimensions must be positive");
  data.assign(static_cast<size_t>(width) * height * channels, 0.0);
}

ImageFeatureGrid ImageFeatureGrid::constant(int width, int height,
                                            int channels, double value) {
  ImageFeatureGrid g(width, height, channels);
  std::fill(g.data.begin(), g.data.end(), value);
  return g;
}

Eigen::VectorXd ImageFeatureGrid::sample(double u, double v) const {
  // Centers at half-integers; u wraps (panorama), v clamps at the poles.
  double gu = u - 0.5;
  double fu = gu - std::floor(gu);
  int c0 = static_cast<int>(std::floor(gu)) % width;
  if (c0 < 0) c0 += width;
  int c1 = (c0 + 1) % width;

  double gv = std::clamp(v - 0.5, 0.0, static_cast<double>(height - 1));
  int r0 = std::min(static_cast<int>(std::floor(gv)), height - 2);
  if (height == 1) r0 = 0;
  int r1 = std::min(r0 + 1, height - 1);
  double fv = std::clamp(gv - r0, 0.0, 1.0);

  Eigen::VectorXd out(channels);
  for (int ch = 0; ch < channels; ++ch)
    out[ch] = (1.0 - fv) * ((1.0 - fu) * at(r0, c0, ch) + fu * at(r0, c1, ch)) +
              fv * ((1.0 - fu) * at(r1, c0, ch) + fu * at(r1, c1, ch));
  return out;
}

ReferenceSet ica_reference_set(const Triplane& tp, PlaneAxes anchor_plane,
                               const Eigen::Vector2d& anchor_coords,
                               std::span<const double> ortho_samples,
                               std::span<const IcaFrame> frames,
                               const EquirectGrid& grid) {
  if (frames.empty())
    throw DomainError("image-conditioned reference set needs >= 1 frame");
  if (!tp.plane(anchor_plane).contains(anchor_coords))
    throw DomainError(std::string("anchor outside ") +
                      plane_name(anchor_plane) + " plane extents");
  for (const IcaFrame& f : frames)
    if (f.features == nullptr || f.features->channels != tp.channels())
      throw ShapeError("frame feature grid missing or channel count differs "
                       "from the triplane");

  ReferenceSet set;
  set.anchor_plane = anchor_plane;
  set.anchor_coords = anchor_coords;

  std::vector<Eigen::VectorXd> feats;
  feats.reserve(ortho_samples.size() * frames.size());
  for (double offset : ortho_samples) {
    Eigen::Vector3d x = lift(anchor_plane, anchor_coords, offset);
    for (size_t fi = 0; fi < frames.size(); ++fi) {
      Eigen::Vector2d px;
      try {
        px = project_point(x, frames[fi].world_to_camera, grid);
      } catch (const DegenerateGeometryError&) {
        ++set.skipped_samples;  // point sits on this camera's center
        continue;
      }
      set.sources.push_back({RefSource::Kind::ImageSample, anchor_plane,
                             static_cast<int>(fi), px});
      feats.push_back(frames[fi].features->sample(px.x(), px.y()));
    }
  }

  set.features.resize(feats.size(), tp.channels());
  for (size_t i = 0; i < feats.size(); ++i)
    set.features.row(i) = feats[i].transpose();
  return set;
}

}  // namespace panoepi
