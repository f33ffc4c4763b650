#include "panoepi/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>

#include "panoepi/attention.hpp"
#include "panoepi/benchmark.hpp"
#include "panoepi/camera.hpp"
#include "panoepi/epipolar.hpp"
#include "panoepi/ray_attention.hpp"
#include "panoepi/reference.hpp"
#include "panoepi/sequence.hpp"
#include "panoepi/threading.hpp"
#include "panoepi/triplane.hpp"

namespace panoepi {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

struct Check {
  int id;
  const char* name;
  double time_budget;  // seconds; 0 = unlimited
  std::function<bool(const SelftestOptions&, std::string&)> body;
};

// Horizontal distance with wraparound.
double wrapped_du(double a, double b, int width) {
  double d = std::abs(a - b);
  return std::min(d, width - d);
}

// ---- 1: every pixel center of a 128x512 view survives the round trip ----
bool check_round_trip(const SelftestOptions&, std::string& detail) {
  EquirectGrid grid(512, 128);
  double max_err = 0.0;
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col) {
      Eigen::Vector2d px = grid.pixel_center(col, row);
      RayDir ray = pixel_to_angles(px.x(), px.y(), grid);
      Eigen::Vector2d back = angles_to_pixel(ray, grid);
      max_err = std::max(max_err, wrapped_du(back.x(), px.x(), grid.width));
      max_err = std::max(max_err, std::abs(back.y() - px.y()));
      // Through the unit vector as well.
      Eigen::Vector2d back2 = angles_to_pixel(RayDir::from_unit(ray.dir), grid);
      max_err = std::max(max_err, wrapped_du(back2.x(), px.x(), grid.width));
      max_err = std::max(max_err, std::abs(back2.y() - px.y()));
    }
  detail = fmt("max pixel error %.3g (limit 1e-9)", max_err);
  return max_err < 1e-9;
}

// ---- 2: projections of a common 3D point satisfy the constraint ----
bool check_epipolar_soundness(const SelftestOptions& opts,
                              std::string& detail) {
  ref::Rng rng(opts.seed + 2);
  EquirectGrid grid(512, 128);
  std::normal_distribution<double> n(0.0, 20.0);
  double max_res = 0.0;
  int done = 0;
  while (done < 1000) {
    PoseSE3 cam_m = ref::random_pose(rng, 10.0);
    PoseSE3 cam_n = ref::random_pose(rng, 10.0);
    Eigen::Vector3d q(n(rng), n(rng), n(rng));
    if ((q - cam_m.translation).norm() < 1e-3 ||
        (q - cam_n.translation).norm() < 1e-3 ||
        (cam_m.translation - cam_n.translation).norm() < 1e-3)
      continue;  // avoid camera centers and zero baselines
    Eigen::Vector2d px_m = project_point(q, cam_m.inverse(), grid);
    Eigen::Vector2d px_n = project_point(q, cam_n.inverse(), grid);
    EssentialMatrix e = essential(relative_pose(cam_m, cam_n));
    max_res = std::max(max_res, std::abs(residual(px_m, px_n, e, grid)));
    ++done;
  }
  detail = fmt("max |residual| %.3g over 1000 pairs (limit 1e-10)", max_res);
  return max_res < 1e-10;
}

// ---- 3: band mask == exhaustive per-pixel residual search ----
bool check_mask_equivalence(const SelftestOptions& opts, std::string& detail) {
  ref::Rng rng(opts.seed + 3);
  std::uint64_t compared = 0;
  for (auto [w, h] : {std::pair{32, 16}, std::pair{64, 32}}) {
    EquirectGrid grid(w, h);
    for (int pair = 0; pair < 50; ++pair) {
      PoseSE3 cam_m = ref::random_pose(rng, 8.0);
      PoseSE3 cam_n = ref::random_pose(rng, 8.0);
      if ((cam_m.translation - cam_n.translation).norm() < 1e-6) continue;
      EssentialMatrix e = essential(relative_pose(cam_m, cam_n));
      for (int qi = 0; qi < 20; ++qi) {
        int col = static_cast<int>(rng() % static_cast<unsigned>(w));
        int row = static_cast<int>(rng() % static_cast<unsigned>(h));
        Eigen::Vector2d query = grid.pixel_center(col, row);
        EpipolarMask mask = epipolar_mask(query, e, grid, 1e-3, 1);
        bool full = false;
        auto oracle = ref::exhaustive_mask(query, e, grid, 1, &full);
        if (full != mask.epipole_full) {
          detail = fmt("epipole flag mismatch (grid %dx%d pair %d)", w, h,
                       pair);
          return false;
        }
        if (oracle.size() != mask.candidates.size()) {
          detail = fmt("size %zu vs oracle %zu (grid %dx%d pair %d query "
                       "%d,%d)",
                       mask.candidates.size(), oracle.size(), w, h, pair, col,
                       row);
          return false;
        }
        for (size_t i = 0; i < oracle.size(); ++i)
          if (oracle[i].col != mask.candidates[i].col ||
              oracle[i].row != mask.candidates[i].row) {
            detail = fmt("candidate %zu differs (grid %dx%d pair %d)", i, w,
                         h, pair);
            return false;
          }
        ++compared;
      }
    }
  }
  detail = fmt("%llu masks equal the exhaustive search",
               static_cast<unsigned long long>(compared));
  return true;
}

// ---- 4: mask density on the working resolution ----
bool check_mask_sparsity(const SelftestOptions& opts, std::string& detail) {
  ref::Rng rng(opts.seed + 4);
  EquirectGrid grid(512, 128);
  const double hw = static_cast<double>(grid.pixel_count());
  double total_frac = 0.0;
  double max_norm_res = 0.0;
  for (int i = 0; i < 100; ++i) {
    PoseSE3 cam_m = ref::random_pose(rng, 10.0);
    PoseSE3 cam_n = ref::random_pose(rng, 10.0);
    EssentialMatrix e = essential(relative_pose(cam_m, cam_n));
    Eigen::Vector2d query =
        grid.pixel_center(static_cast<int>(rng() % 512u),
                          static_cast<int>(rng() % 128u));
    EpipolarMask mask = epipolar_mask(query, e, grid, 1e-3, 1);
    if (mask.epipole_full) {
      total_frac += 1.0;
      continue;
    }
    total_frac += mask.candidates.size() / hw;
    // Spot-check the residual guarantee on a slice of candidates.
    for (size_t c = 0; c < mask.candidates.size(); c += 97) {
      double r = std::abs(normalized_residual(
          query, EpipolarMask::center(mask.candidates[c]), e, grid));
      max_norm_res = std::max(max_norm_res, r);
      // 1e-12 absorbs the rounding difference between the tolerance's
      // sin((band+0.5)*pi/h) and the residual's independently rounded pitch.
      if (r > mask.tolerance + 1e-12) {
        detail = fmt("candidate residual %.3g exceeds tolerance %.3g", r,
                     mask.tolerance);
        return false;
      }
    }
  }
  double mean_frac = total_frac / 100.0;
  detail = fmt("mean M/(HW) = %.6f (limit %.6f), max |res| %.3g", mean_frac,
               3.0 / 128.0, max_norm_res);
  return mean_frac <= 3.0 / 128.0;
}

// ---- 5: masked attention with full masks == dense attention ----
bool check_masked_full_equivalence(const SelftestOptions& opts,
                                   std::string& detail) {
  ref::Rng rng(opts.seed + 5);
  const int w = 64, h = 16, c = 8;
  const long hw = static_cast<long>(w) * h;
  double max_diff = 0.0;
  for (int frames = 1; frames <= 3; ++frames)
    for (int inst = 0; inst < 5; ++inst) {
      AttentionParams params = ref::random_attention_params(rng, c);
      Eigen::MatrixXd queries = ref::random_features(rng, hw, c);
      std::vector<Eigen::MatrixXd> kv(frames);
      Eigen::MatrixXd concat(hw * frames, c);
      for (int f = 0; f < frames; ++f) {
        kv[f] = ref::random_features(rng, hw, c);
        concat.middleRows(static_cast<long>(f) * hw, hw) = kv[f];
      }
      QueryMask all;
      all.reserve(hw * frames);
      for (int f = 0; f < frames; ++f)
        for (long i = 0; i < hw; ++i)
          all.push_back({f, static_cast<std::int32_t>(i)});
      std::vector<QueryMask> masks(queries.rows(), all);
      Eigen::MatrixXd m = masked_attention(queries, kv, masks, params);
      Eigen::MatrixXd d = full_attention(queries, concat, params);
      max_diff = std::max(max_diff, (m - d).cwiseAbs().maxCoeff());
    }
  detail = fmt("max |masked - dense| = %.3g (limit 1e-12)", max_diff);
  return max_diff < 1e-12;
}

// ---- 6: instrumented counters == closed-form cost model ----
bool check_cost_counters(const SelftestOptions& opts, std::string& detail) {
  ref::Rng rng(opts.seed + 6);
  const int h = 4, w = 8, c = 4;
  const long hw = static_cast<long>(h) * w;
  const std::uint64_t m = 5;
  for (int n = 1; n <= 10; ++n) {
    std::vector<Eigen::MatrixXd> features(n);
    for (int i = 0; i < n; ++i) features[i] = ref::random_features(rng, hw, c);
    AttentionParams params = ref::random_attention_params(rng, c);

    // Dense: every frame against the concatenation of the others.
    AttentionStats dense_stats;
    for (int i = 0; i < n && n > 1; ++i) {
      Eigen::MatrixXd concat(hw * (n - 1), c);
      long at = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        concat.middleRows(at, hw) = features[j];
        at += hw;
      }
      full_attention(features[i], concat, params, &dense_stats);
    }

    // Masked: causal window with m synthetic candidates per source frame.
    Schedule schedule = sparse_schedule(n, 2);
    AttentionStats masked_stats;
    for (int i = 0; i < n; ++i) {
      if (schedule[i].empty()) continue;
      std::vector<Eigen::MatrixXd> kv;
      for (int j : schedule[i]) kv.push_back(features[j]);
      std::vector<QueryMask> masks(hw);
      for (long q = 0; q < hw; ++q)
        for (size_t s = 0; s < schedule[i].size(); ++s)
          for (std::uint64_t t = 0; t < m; ++t)
            masks[q].push_back(
                {static_cast<std::int32_t>(s),
                 static_cast<std::int32_t>((q + 7 * s + t) % hw)});
      masked_attention(features[i], kv, masks, params, &masked_stats);
    }

    CostComparison model = cost_model(n, h, w, c, schedule, m);
    std::uint64_t dense_expect =
        static_cast<std::uint64_t>(n) * (n - 1) * hw * hw;
    if (dense_stats.score_evaluations != model.dense.score_evaluations ||
        model.dense.score_evaluations != dense_expect) {
      detail = fmt("dense N=%d: measured %llu, model %llu, closed form %llu",
                   n,
                   static_cast<unsigned long long>(
                       dense_stats.score_evaluations),
                   static_cast<unsigned long long>(
                       model.dense.score_evaluations),
                   static_cast<unsigned long long>(dense_expect));
      return false;
    }
    std::uint64_t pairs =
        n >= 2 ? 2ull * n - 3 : 0;  // window-2 causal pair count
    std::uint64_t masked_expect = pairs * hw * m;
    if (masked_stats.score_evaluations != model.masked.score_evaluations ||
        model.masked.score_evaluations != masked_expect) {
      detail = fmt("masked N=%d: measured %llu, model %llu, closed form %llu",
                   n,
                   static_cast<unsigned long long>(
                       masked_stats.score_evaluations),
                   static_cast<unsigned long long>(
                       model.masked.score_evaluations),
                   static_cast<unsigned long long>(masked_expect));
      return false;
    }
  }
  detail = "counters equal the closed forms for N = 1..10";
  return true;
}

// ---- 7: work and wall time scale with the schedule ----
bool check_scaling_trend(const SelftestOptions& opts, std::string& detail) {
  BenchSpec spec;
  spec.seed = opts.seed;
  BenchResult res = run_bench(spec);
  const std::uint64_t hw = spec.grid.pixel_count();
  for (int n : {10, 20, 30}) {
    const BenchRow* d = res.find(n, "dense");
    const BenchRow* s = res.find(n, "sparse");
    if (!d || !s || d->capped) {
      detail = fmt("missing or capped rows at N=%d", n);
      return false;
    }
    if (d->frame_pairs != static_cast<std::uint64_t>(n) * (n - 1) ||
        s->frame_pairs != 2ull * n - 3) {
      detail = fmt("pair counts at N=%d are not the closed forms", n);
      return false;
    }
    if (d->score_evaluations != d->frame_pairs * hw * hw) {
      detail = fmt("dense score count at N=%d is not pairs*(HW)^2", n);
      return false;
    }
  }
  double dense_ratio = res.find(30, "dense")->median_seconds /
                       res.find(10, "dense")->median_seconds;
  double sparse_ratio = res.find(30, "sparse")->median_seconds /
                        res.find(10, "sparse")->median_seconds;
  detail = fmt("dense pairs 90/380/870, time x%.2f (want > 4); sparse pairs "
               "17/37/57, time x%.2f (want < 4)",
               dense_ratio, sparse_ratio);
  return dense_ratio > 4.0 && sparse_ratio < 4.0;
}

// ---- 8: triplane sampling: exactness, superposition, oracle match ----
bool check_triplane_sampling(const SelftestOptions& opts,
                             std::string& detail) {
  ref::Rng rng(opts.seed + 8);
  // Integer extents make node coordinates exactly representable.
  ref::Box box{0.0, 8.0, 0.0, 8.0, 0.0, 8.0};
  Triplane tp = ref::random_triplane(rng, 9, 9, 6, box);
  if (opts.inject_fault) tp.xy.data[0] += 1e-2;

  // Node exactness on each plane.
  for (PlaneAxes axes : {PlaneAxes::XY, PlaneAxes::XZ, PlaneAxes::YZ}) {
    const FeaturePlane& p = tp.plane(axes);
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c) {
        Eigen::VectorXd got = bilinear_sample(
            p, {p.a_min + c * (p.a_max - p.a_min) / (p.cols - 1),
                p.b_min + r * (p.b_max - p.b_min) / (p.rows - 1)});
        for (int ch = 0; ch < p.channels; ++ch)
          if (got[ch] != p.at(r, c, ch)) {
            detail = fmt("plane %s node (%d,%d) channel %d: %.17g != %.17g",
                         plane_name(axes), r, c, ch, got[ch], p.at(r, c, ch));
            return false;
          }
      }
  }

  // Oracle match (and the fault-injection hook): the pristine triplane is
  // rebuilt from the same seed for the reference side.
  ref::Rng rng_clean(opts.seed + 8);
  Triplane clean = ref::random_triplane(rng_clean, 9, 9, 6, box);
  double max_diff = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d x(ref::uniform(rng, 0.0, 8.0), ref::uniform(rng, 0.0, 8.0),
                      ref::uniform(rng, 0.0, 8.0));
    max_diff = std::max(max_diff, (sample_3d(tp, x) -
                                   ref::naive_sample_3d(clean, x))
                                      .cwiseAbs()
                                      .maxCoeff());
  }
  if (max_diff >= 1e-12) {
    detail = fmt("sample vs oracle max diff %.3g (limit 1e-12)", max_diff);
    return false;
  }

  // Superposition: samples are linear in the stored features.
  Triplane tp_b = ref::random_triplane(rng, 9, 9, 6, box);
  Triplane combo = tp;
  for (PlaneAxes axes : {PlaneAxes::XY, PlaneAxes::XZ, PlaneAxes::YZ}) {
    FeaturePlane& pc = combo.plane(axes);
    const FeaturePlane& pb = tp_b.plane(axes);
    for (size_t i = 0; i < pc.data.size(); ++i)
      pc.data[i] = 2.0 * pc.data[i] - 3.0 * pb.data[i];
  }
  double max_lin = 0.0;
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d x(ref::uniform(rng, 0.0, 8.0), ref::uniform(rng, 0.0, 8.0),
                      ref::uniform(rng, 0.0, 8.0));
    Eigen::VectorXd lhs = sample_3d(combo, x);
    Eigen::VectorXd rhs = 2.0 * sample_3d(tp, x) - 3.0 * sample_3d(tp_b, x);
    max_lin = std::max(max_lin, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  if (max_lin >= 1e-12) {
    detail = fmt("superposition max diff %.3g (limit 1e-12)", max_lin);
    return false;
  }
  detail = fmt("nodes exact, oracle diff %.3g, superposition diff %.3g",
               max_diff, max_lin);
  return true;
}

// ---- 9: analytic gradients vs finite differences ----
bool check_gradients(const SelftestOptions& opts, std::string& detail) {
  ref::Rng rng(opts.seed + 9);
  // Bilinear jacobians at interior points.
  double max_rel_bilin = 0.0;
  for (int i = 0; i < 500; ++i) {
    ref::Box box{-4.0, 4.0, -4.0, 4.0, -4.0, 4.0};
    Triplane tp = ref::random_triplane(rng, 5, 7, 3, box);
    const FeaturePlane& p = tp.xy;
    // Sample strictly inside one interpolation cell.
    double ca = (p.a_max - p.a_min) / (p.cols - 1);
    double cb = (p.b_max - p.b_min) / (p.rows - 1);
    int ia = static_cast<int>(rng() % static_cast<unsigned>(p.cols - 1));
    int ib = static_cast<int>(rng() % static_cast<unsigned>(p.rows - 1));
    Eigen::Vector2d pt(p.a_min + (ia + ref::uniform(rng, 0.1, 0.9)) * ca,
                       p.b_min + (ib + ref::uniform(rng, 0.1, 0.9)) * cb);
    Eigen::MatrixXd analytic = bilinear_grad(p, pt).jacobian;
    Eigen::MatrixXd fd = ref::fd_bilinear_jacobian(p, pt, 1e-6);
    double rel = (analytic - fd).norm() /
                 std::max({analytic.norm(), fd.norm(), 1e-10});
    max_rel_bilin = std::max(max_rel_bilin, rel);
  }
  if (max_rel_bilin >= 1e-4) {
    detail = fmt("bilinear jacobian rel err %.3g (limit 1e-4)", max_rel_bilin);
    return false;
  }

  // Ray-attention parameter gradients via the loss L = g . out.
  double max_rel_ray = 0.0;
  int instances = 0;
  while (instances < 500) {
    ref::Box box{-150.0, 150.0, -150.0, 150.0, -150.0, 150.0};
    Triplane tp = ref::random_triplane(rng, 8, 8, 4, box);
    RaySampleConfig cfg;
    cfg.samples = 1 + static_cast<int>(rng() % 4u);
    cfg.heads = 1 + static_cast<int>(rng() % 3u);
    cfg.r_min = ref::uniform(rng, 1.0, 5.0);
    cfg.r_max = cfg.r_min + ref::uniform(rng, 10.0, 50.0);
    bool per_channel = (rng() % 2u) == 0;
    bool along_ray = (rng() % 4u) == 0;
    RayAttentionParams params =
        ref::random_ray_params(rng, cfg, 4, 0.5, per_channel, along_ray);
    PoseSE3 cam = pose4dof_to_se3(
        ref::random_pose4dof(rng, {-5.0, 5.0, -5.0, 5.0}, 1.0, 2.0));
    EquirectGrid grid(64, 16);
    Eigen::Vector2d pixel =
        grid.pixel_center(static_cast<int>(rng() % 64u),
                          static_cast<int>(rng() % 16u));
    Eigen::VectorXd g(4);
    for (int c = 0; c < 4; ++c) g[c] = ref::uniform(rng, -1.0, 1.0);

    // Finite differences are only valid when no sample point sits near a
    // bilinear cell edge (the kink would corrupt the difference quotient).
    RayTrace trace = trace_ray_pixel_attention(tp, cam, pixel, grid, cfg,
                                               params);
    auto near_cell_edge = [&](const Eigen::Vector3d& x) {
      for (PlaneAxes axes :
           {PlaneAxes::XY, PlaneAxes::XZ, PlaneAxes::YZ}) {
        const FeaturePlane& p = tp.plane(axes);
        Eigen::Vector2d c2 = plane_coords(axes, x);
        double ga = (c2.x() - p.a_min) / (p.a_max - p.a_min) * (p.cols - 1);
        double gb = (c2.y() - p.b_min) / (p.b_max - p.b_min) * (p.rows - 1);
        if (std::abs(ga - std::round(ga)) < 1e-5 ||
            std::abs(gb - std::round(gb)) < 1e-5)
          return true;
      }
      return false;
    };
    bool kinked = false;
    for (const Eigen::Vector3d& sp : trace.sample_points)
      kinked = kinked || near_cell_edge(sp);
    if (kinked) continue;  // redraw

    RayAttentionGrads grads =
        ray_attention_grad(tp, cam, pixel, grid, cfg, params, g);
    if (grads.boundary_samples > 0) continue;  // redraw

    auto loss = [&](const RayAttentionParams& p) {
      return g.dot(ray_pixel_attention(tp, cam, pixel, grid, cfg, p));
    };
    const double h = 1e-6;
    double num2 = 0.0, den2 = 0.0;
    auto accumulate = [&](double analytic, double fd) {
      num2 += (analytic - fd) * (analytic - fd);
      den2 += std::max(analytic * analytic, fd * fd);
    };
    for (int k = 0; k < cfg.samples; ++k)
      for (int j = 0; j < cfg.heads; ++j) {
        RayAttentionParams hi = params, lo = params;
        hi.logits(k, j) += h;
        lo.logits(k, j) -= h;
        accumulate(grads.logit_grads(k, j), (loss(hi) - loss(lo)) / (2 * h));
        for (int a = 0; a < 3; ++a) {
          RayAttentionParams ohi = params, olo = params;
          ohi.offsets(k * cfg.heads + j, a) += h;
          olo.offsets(k * cfg.heads + j, a) -= h;
          accumulate(grads.offset_grads(k * cfg.heads + j, a),
                     (loss(ohi) - loss(olo)) / (2 * h));
        }
      }
    double rel = std::sqrt(num2) / std::max(std::sqrt(den2), 1e-10);
    max_rel_ray = std::max(max_rel_ray, rel);
    ++instances;
  }
  detail = fmt("bilinear rel err %.3g, ray-attn rel err %.3g (limit 1e-4)",
               max_rel_bilin, max_rel_ray);
  return max_rel_ray < 1e-4;
}

// ---- 10: per-head attention weights are a softmax ----
bool check_normalization(const SelftestOptions& opts, std::string& detail) {
  ref::Rng rng(opts.seed + 10);
  double max_dev = 0.0;
  for (int i = 0; i < 200; ++i) {
    RaySampleConfig cfg;
    cfg.samples = 1 + static_cast<int>(rng() % 16u);
    cfg.heads = 1 + static_cast<int>(rng() % 6u);
    RayAttentionParams params = ref::random_ray_params(rng, cfg, 3, 1.0);
    Eigen::MatrixXd a = params.attention_weights();
    for (int j = 0; j < cfg.heads; ++j)
      max_dev = std::max(max_dev, std::abs(a.col(j).sum() - 1.0));
  }
  if (max_dev >= 1e-12) {
    detail = fmt("softmax column sum deviates by %.3g (limit 1e-12)", max_dev);
    return false;
  }

  // Degenerate K=J=1 head: the output is the triplane sample itself.
  ref::Box box{-50.0, 50.0, -50.0, 50.0, -50.0, 50.0};
  Triplane tp = ref::random_triplane(rng, 6, 6, 3, box);
  RaySampleConfig cfg;
  cfg.samples = 1;
  cfg.heads = 1;
  cfg.r_min = 7.0;
  cfg.r_max = 9.0;
  RayAttentionParams params = RayAttentionParams::zero_init(cfg);
  EquirectGrid grid(64, 16);
  double max_diff = 0.0;
  for (int i = 0; i < 50; ++i) {
    PoseSE3 cam = pose4dof_to_se3(
        ref::random_pose4dof(rng, {-10.0, 10.0, -10.0, 10.0}, 1.0, 2.0));
    Eigen::Vector2d pixel =
        grid.pixel_center(static_cast<int>(rng() % 64u),
                          static_cast<int>(rng() % 16u));
    Eigen::VectorXd out = ray_pixel_attention(tp, cam, pixel, grid, cfg,
                                              params);
    Eigen::VectorXd direct =
        sample_3d(tp, sample_ray_points(pixel, cam, grid, cfg)[0]);
    max_diff = std::max(max_diff, (out - direct).cwiseAbs().maxCoeff());
  }
  detail = fmt("softmax sums within %.3g; K=J=1 diff %.3g (limits 1e-12)",
               max_dev, max_diff);
  return max_diff < 1e-12;
}

// ---- 11: traced curves pass through both epipoles ----
bool check_epipole_consistency(const SelftestOptions& opts,
                               std::string& detail) {
  ref::Rng rng(opts.seed + 11);
  EquirectGrid grid(512, 128);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    PoseSE3 cam_m = ref::random_pose(rng, 5.0);
    PoseSE3 cam_n = ref::random_pose(rng, 5.0);
    if ((cam_m.translation - cam_n.translation).norm() < 1e-6) continue;
    EssentialMatrix e = essential(relative_pose(cam_m, cam_n));
    Eigen::Vector2d query =
        grid.pixel_center(static_cast<int>(rng() % 512u),
                          static_cast<int>(rng() % 128u));
    EpipolarCurve curve = epipolar_curve(query, e, grid);
    if (curve.epipole_query || curve.points.size() < 2) continue;
    for (const Eigen::Vector2d& ep : epipoles(e, grid))
      worst = std::max(worst, ref::curve_polyline_distance(curve, ep, grid));
    ++done;
  }
  detail = fmt("max curve-to-epipole distance %.3f px (limit 1)", worst);
  return worst < 1.0;
}

}  // namespace

std::vector<CheckResult> run_acceptance_checks(const SelftestOptions& opts) {
  if (opts.threads > 0) set_max_threads(opts.threads);

  const Check checks[] = {
      {1, "projection-round-trip", 1.0, check_round_trip},
      {2, "epipolar-soundness", 1.0, check_epipolar_soundness},
      {3, "mask-exhaustive-equivalence", 30.0, check_mask_equivalence},
      {4, "mask-sparsity", 0.0, check_mask_sparsity},
      {5, "masked-full-equivalence", 0.0, check_masked_full_equivalence},
      {6, "cost-counter-exactness", 0.0, check_cost_counters},
      {7, "scaling-trend", 120.0, check_scaling_trend},
      {8, "triplane-sampling", 0.0, check_triplane_sampling},
      {9, "gradient-checks", 0.0, check_gradients},
      {10, "ray-attention-normalization", 0.0, check_normalization},
      {11, "epipole-curve-consistency", 0.0, check_epipole_consistency},
  };

  std::vector<CheckResult> results;
  for (const Check& c : checks) {
    CheckResult r;
    r.id = c.id;
    r.name = c.name;
    auto t0 = Clock::now();
    try {
      r.pass = c.body(opts, r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.time_budget > 0.0 && r.seconds >= c.time_budget) {
      r.pass = false;
      r.detail += fmt(" [over time budget: %.2f s >= %.0f s]", r.seconds,
                      c.time_budget);
    }
    results.push_back(std::move(r));
  }
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.pass; });
}

}  // namespace panoepi
