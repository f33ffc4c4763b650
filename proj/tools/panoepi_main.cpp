// panoepi command-line tool: epipolar curve rendering, mask statistics,
// attention benchmarking, ray-attention traces and the acceptance selftest.
//
// Exit codes: 0 success, 1 usage/file errors, 2 degenerate geometry,
// 3 selftest failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "panoepi/benchmark.hpp"
#include "panoepi/io.hpp"
#include "panoepi/ray_attention.hpp"
#include "panoepi/reference.hpp"
#include "panoepi/selftest.hpp"
#include "panoepi/sequence.hpp"
#include "panoepi/threading.hpp"

namespace {

using namespace panoepi;

std::vector<double> parse_doubles(const std::string& s, size_t n,
                                  const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw DomainError(std::string("bad ") + what + " '" + s + "'");
    }
  }
  if (out.size() != n)
    throw DomainError(std::string(what) + " needs " + std::to_string(n) +
                      " comma-separated values, got '" + s + "'");
  return out;
}

EquirectGrid parse_grid(const std::string& s) {
  size_t x = s.find('x');
  if (x == std::string::npos)
    throw DomainError("grid must be WxH, got '" + s + "'");
  try {
    return EquirectGrid(std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1)));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw DomainError("grid must be WxH, got '" + s + "'");
  }
}

struct GlobalOpts {
  std::string grid;  // empty = per-command default
  int threads = 0;
  std::uint64_t seed = 42;

  EquirectGrid resolve_grid(const char* fallback) const {
    return parse_grid(grid.empty() ? fallback : grid);
  }
};

void draw_disk(ImageRGB& img, double u, double v, int radius, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      int col = static_cast<int>(std::floor(u)) + dx;
      int row = static_cast<int>(std::floor(v)) + dy;
      col = ((col % img.width) + img.width) % img.width;  // wrap
      if (row < 0 || row >= img.height) continue;
      img.set(col, row, r, g, b);
    }
}

// ---- epicurve ----

struct EpicurveOpts {
  std::string poses;
  std::string pixel;
  int source = 0, target = 1;
  double eps = 1e-3;
  int band = 1;
  int thickness = 1;
  std::string format = "ppm";
  std::string out;
};

int cmd_epicurve(const GlobalOpts& g, const EpicurveOpts& o) {
  EquirectGrid grid = g.resolve_grid("512x128");
  Trajectory traj = load_trajectory(o.poses);
  if (o.source < 0 || o.source >= traj.size() || o.target < 0 ||
      o.target >= traj.size() || o.source == o.target)
    throw DomainError("need two distinct frame indices within the trajectory");

  Eigen::Vector2d query(grid.width / 2.0, grid.height / 2.0);
  if (!o.pixel.empty()) {
    auto uv = parse_doubles(o.pixel, 2, "pixel");
    query = {uv[0], uv[1]};
  }

  PoseSE3 pm = pose4dof_to_se3(traj.frames[o.source].pose);
  PoseSE3 pn = pose4dof_to_se3(traj.frames[o.target].pose);
  EssentialMatrix e =
      essential(relative_pose(pm, pn),
                static_cast<int>(traj.frames[o.source].id),
                static_cast<int>(traj.frames[o.target].id));
  EpipolarCurve curve = epipolar_curve(query, e, grid);
  auto eps2 = epipoles(e, grid);

  ImageRGB img(grid.width, grid.height);
  if (curve.epipole_query) {
    std::cerr << "query sits on an epipole: every pixel satisfies the "
                 "constraint\n";
    for (auto& px : img.data) px = 40;  // flat gray = full mask
  }
  for (int col : curve.full_columns)
    for (int row = 0; row < grid.height; ++row)
      img.set(col, row, 0, 120, 0);
  for (const EpipolarCurve::Point& pt : curve.points)
    draw_disk(img, pt.u, pt.v, o.thickness - 1, 0, 220, 0);
  draw_disk(img, eps2[0].x(), eps2[0].y(), o.thickness, 230, 40, 40);
  draw_disk(img, eps2[1].x(), eps2[1].y(), o.thickness, 230, 120, 40);

  if (o.format == "ppm") {
    write_ppm(o.out, img);
  } else if (o.format == "pgm") {
    ImageGray gray(img.width, img.height);
    for (int row = 0; row < img.height; ++row)
      for (int col = 0; col < img.width; ++col) {
        size_t i = (static_cast<size_t>(row) * img.width + col) * 3;
        gray.set(col, row,
                 static_cast<std::uint8_t>(
                     (img.data[i] + img.data[i + 1] + img.data[i + 2]) / 3));
      }
    write_pgm(o.out, gray);
  } else {
    throw DomainError("unknown image format '" + o.format + "'");
  }
  std::cerr << "curve: " << curve.points.size() << " points, "
            << curve.full_columns.size() << " full columns; epipoles at ("
            << eps2[0].x() << ", " << eps2[0].y() << ") and (" << eps2[1].x()
            << ", " << eps2[1].y() << ")\n";
  return 0;
}

// ---- mask ----

struct MaskOpts {
  std::string poses;
  std::string schedule = "sparse";
  int window = 2;
  double eps = 1e-3;
  int band = 1;
  std::string out;
  std::string dump_dir;
};

std::string pair_cache_name(const EssentialMatrix& e, const EquirectGrid& grid,
                            const MaskConfig& cfg) {
  std::vector<std::uint8_t> key;
  auto push_f64 = [&](double v) {
    std::uint8_t b[8];
    std::memcpy(b, &v, 8);
    key.insert(key.end(), b, b + 8);
  };
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) push_f64(e.e(r, c));
  for (int i = 0; i < 3; ++i) push_f64(e.baseline[i]);
  push_f64(grid.width);
  push_f64(grid.height);
  push_f64(cfg.eps);
  push_f64(cfg.band_halfwidth);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(key)));
  return std::string("pair-") + buf + ".json";
}

int cmd_mask(const GlobalOpts& g, const MaskOpts& o) {
  EquirectGrid grid = g.resolve_grid("512x128");
  MaskConfig cfg{o.eps, o.band};
  if (o.schedule != "dense" && o.schedule != "sparse")
    throw DomainError("schedule must be 'dense' or 'sparse'");
  Trajectory traj = load_trajectory(o.poses);
  Schedule schedule = o.schedule == "dense"
                          ? dense_schedule(traj.size())
                          : sparse_schedule(traj.size(), o.window);
  TrajectoryMasks masks = build_frame_masks(traj, schedule, grid, cfg);

  const char* cache_env = std::getenv("PANOEPI_CACHE_DIR");
  std::optional<std::filesystem::path> cache;
  if (cache_env && *cache_env) {
    cache = std::filesystem::path(cache_env);
    std::filesystem::create_directories(*cache);
  }

  std::ostringstream csv;
  csv << "# panoepi mask-stats v1\n";
  csv << "query_frame,source_frame,queries,mean_candidates,max_candidates,"
         "sparsity,degenerate_queries,epipole_queries\n";
  const double hw = static_cast<double>(grid.pixel_count());
  for (size_t pi = 0; pi < masks.pairs().size(); ++pi) {
    const TrajectoryMasks::Pair& pair = masks.pairs()[pi];
    PairMaskStats st;
    bool from_cache = false;
    std::filesystem::path cache_file;
    if (cache) {
      cache_file = *cache / pair_cache_name(pair.essential, grid, cfg);
      if (std::filesystem::exists(cache_file)) {
        std::ifstream in(cache_file);
        nlohmann::json j;
        in >> j;
        st.queries = j.at("queries").get<std::uint64_t>();
        st.total_candidates = j.at("total_candidates").get<std::uint64_t>();
        st.max_candidates = j.at("max_candidates").get<std::uint64_t>();
        st.degenerate_queries =
            j.at("degenerate_queries").get<std::uint64_t>();
        st.epipole_queries = j.at("epipole_queries").get<std::uint64_t>();
        from_cache = true;
      }
    }
    if (!from_cache) {
      st = pair_mask_stats(masks, static_cast<int>(pi));
      if (cache) {
        nlohmann::json j{{"queries", st.queries},
                         {"total_candidates", st.total_candidates},
                         {"max_candidates", st.max_candidates},
                         {"degenerate_queries", st.degenerate_queries},
                         {"epipole_queries", st.epipole_queries}};
        std::ofstream out(cache_file);
        out << j.dump() << "\n";
      }
    }
    if (!o.dump_dir.empty()) {
      std::filesystem::create_directories(o.dump_dir);
      char name[64];
      std::snprintf(name, sizeof(name), "masks-%03d-%03d.epmk",
                    pair.query_frame, pair.source_frame);
      std::vector<EpipolarMask> all =
          masks.masks_for_pair(static_cast<int>(pi));
      write_mask_csr(std::filesystem::path(o.dump_dir) / name, grid, cfg, all);
    }
    char row[256];
    std::snprintf(row, sizeof(row), "%d,%d,%llu,%.6f,%llu,%.8f,%llu,%llu\n",
                  pair.query_frame, pair.source_frame,
                  static_cast<unsigned long long>(st.queries),
                  st.mean_candidates(),
                  static_cast<unsigned long long>(st.max_candidates),
                  st.mean_candidates() / hw,
                  static_cast<unsigned long long>(st.degenerate_queries),
                  static_cast<unsigned long long>(st.epipole_queries));
    csv << row;
    std::cerr << "pair " << pair.query_frame << "->" << pair.source_frame
              << (from_cache ? " (cached)" : "") << ": mean M = "
              << st.mean_candidates() << "\n";
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(o.out);
    if (!out) throw IoError("cannot open " + o.out + " for writing");
    out << csv.str();
  }
  return 0;
}

// ---- bench ----

struct BenchOpts {
  std::vector<int> frames{10, 20, 30};
  int reps = 5;
  int channels = 16;
  int window = 2;
  double eps = 1e-3;
  int band = 1;
  std::uint64_t max_score_buffer = 100'000'000;
  std::string out;
};

int cmd_bench(const GlobalOpts& g, const BenchOpts& o) {
  BenchSpec spec;
  spec.frame_counts = o.frames;
  spec.grid = g.resolve_grid("32x8");
  spec.channels = o.channels;
  spec.mask = {o.eps, o.band};
  spec.window = o.window;
  spec.repetitions = o.reps;
  spec.seed = g.seed;
  spec.max_score_buffer = o.max_score_buffer;
  BenchResult res = run_bench(spec);
  if (o.out.empty())
    write_bench_csv(std::cout, res);
  else
    write_bench_csv(std::filesystem::path(o.out), res);
  return 0;
}

// ---- trace ----

struct TraceOpts {
  std::string pose = "0,0,1.6,0";
  std::string pixel;
  int samples = 8;
  int heads = 2;
  std::string range = "2,80";
  int channels = 8;
  std::string triplane;
  std::string params;
};

int cmd_trace(const GlobalOpts& g, const TraceOpts& o) {
  EquirectGrid grid = g.resolve_grid("512x128");
  RaySampleConfig cfg;
  cfg.samples = o.samples;
  cfg.heads = o.heads;
  auto range = parse_doubles(o.range, 2, "range");
  cfg.r_min = range[0];
  cfg.r_max = range[1];
  cfg.validate();

  Triplane tp;
  if (o.triplane.empty()) {
    ref::Rng rng(g.seed);
    tp = ref::random_triplane(rng, 16, 16, o.channels,
                              {-150.0, 150.0, -150.0, 150.0, -150.0, 150.0});
    std::cerr << "using a procedural triplane (seed " << g.seed << ")\n";
  } else {
    tp = read_triplane(o.triplane);
  }

  RayAttentionParams params = o.params.empty()
                                  ? RayAttentionParams::zero_init(cfg)
                                  : read_ray_params(o.params);

  auto pose_vals = parse_doubles(o.pose, 4, "pose");
  PoseSE3 cam = pose4dof_to_se3(
      Pose4DoF({pose_vals[0], pose_vals[1], pose_vals[2]}, pose_vals[3]));
  Eigen::Vector2d pixel(grid.width / 2.0, grid.height / 2.0);
  if (!o.pixel.empty()) {
    auto uv = parse_doubles(o.pixel, 2, "pixel");
    pixel = {uv[0], uv[1]};
  }

  RayTrace t = trace_ray_pixel_attention(tp, cam, pixel, grid, cfg, params);
  std::cout << "pixel (" << pixel.x() << ", " << pixel.y() << "), "
            << cfg.samples << " samples x " << cfg.heads << " heads, range ["
            << cfg.r_min << ", " << cfg.r_max << "]\n";
  for (int k = 0; k < cfg.samples; ++k) {
    const Eigen::Vector3d& p = t.points[k];
    std::cout << "  k=" << k << " r=" << t.depths[k] << " point=(" << p.x()
              << ", " << p.y() << ", " << p.z() << ") attention=[";
    for (int j = 0; j < cfg.heads; ++j)
      std::cout << (j ? ", " : "") << t.attention(k, j);
    std::cout << "]\n";
  }
  for (int j = 0; j < cfg.heads; ++j)
    std::cout << "head " << j << " weight sum = " << t.attention.col(j).sum()
              << "\n";
  std::cout << "feature = [";
  for (int c = 0; c < t.feature.size(); ++c)
    std::cout << (c ? ", " : "") << t.feature[c];
  std::cout << "]\n";
  return 0;
}

// ---- selftest ----

int cmd_selftest(const GlobalOpts& g, bool inject_fault) {
  SelftestOptions opts;
  opts.seed = g.seed;
  opts.threads = g.threads;
  opts.inject_fault = inject_fault;
  std::vector<CheckResult> results = run_acceptance_checks(opts);
  for (const CheckResult& r : results) {
    char line[700];
    std::snprintf(line, sizeof(line), "[%s] %02d %s (%.2f s) %s",
                  r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                  r.detail.c_str());
    std::cout << line << "\n";
  }
  bool ok = all_passed(results);
  std::cout << (ok ? "selftest passed" : "selftest FAILED") << "\n";
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panoramic epipolar geometry and sparse attention toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--grid", g.grid,
                 "view resolution WxH (default 512x128; bench uses 32x8)");
  app.add_option("--threads", g.threads, "max OpenMP threads (0 = default)");
  app.add_option("--seed", g.seed, "random seed for procedural inputs");
  // Let the global options above appear after the subcommand name too.
  app.fallthrough();

  EpicurveOpts eo;
  CLI::App* epicurve =
      app.add_subcommand("epicurve", "render an epipolar curve image");
  epicurve->add_option("--poses", eo.poses, "trajectory file (text or .json)")
      ->required();
  epicurve->add_option("--pixel", eo.pixel, "query pixel 'u,v' (default "
                       "view center)");
  epicurve->add_option("--source", eo.source, "query frame index (default 0)");
  epicurve->add_option("--target", eo.target, "target frame index (default 1)");
  epicurve->add_option("--eps", eo.eps, "residual tolerance");
  epicurve->add_option("--band", eo.band, "band halfwidth in rows");
  epicurve->add_option("--thickness", eo.thickness, "curve thickness px");
  epicurve->add_option("--format", eo.format, "ppm or pgm");
  epicurve->add_option("--out", eo.out, "output image path")->required();

  MaskOpts mo;
  CLI::App* mask =
      app.add_subcommand("mask", "per-pair epipolar mask statistics (CSV)");
  mask->add_option("--poses", mo.poses, "trajectory file")->required();
  mask->add_option("--schedule", mo.schedule, "sparse (default) or dense");
  mask->add_option("--window", mo.window, "sparse window width");
  mask->add_option("--eps", mo.eps, "residual tolerance");
  mask->add_option("--band", mo.band, "band halfwidth in rows");
  mask->add_option("--out", mo.out, "CSV path (default stdout)");
  mask->add_option("--dump-dir", mo.dump_dir,
                   "also write per-pair candidate files here");

  BenchOpts bo;
  CLI::App* bench = app.add_subcommand(
      "bench", "dense vs masked attention timing and counters");
  bench->add_option("--frames", bo.frames, "frame counts")->delimiter(',');
  bench->add_option("--reps", bo.reps, "repetitions (median reported)");
  bench->add_option("--channels", bo.channels, "feature channels");
  bench->add_option("--window", bo.window, "sparse window width");
  bench->add_option("--eps", bo.eps, "mask residual tolerance");
  bench->add_option("--band", bo.band, "mask band halfwidth");
  bench->add_option("--max-score-buffer", bo.max_score_buffer,
                    "dense runs above this many score elements are skipped");
  bench->add_option("--out", bo.out, "CSV path (default stdout)");

  TraceOpts to;
  CLI::App* trace =
      app.add_subcommand("trace", "dump one pixel's ray attention");
  trace->add_option("--pose", to.pose, "camera pose 'x,y,z,yaw'");
  trace->add_option("--pixel", to.pixel, "pixel 'u,v' (default view center)");
  trace->add_option("--samples", to.samples, "ray samples K");
  trace->add_option("--heads", to.heads, "heads J");
  trace->add_option("--range", to.range, "depth range 'r_min,r_max'");
  trace->add_option("--channels", to.channels,
                    "channels of the procedural triplane");
  trace->add_option("--triplane", to.triplane, "triplane file (TPLN)");
  trace->add_option("--params", to.params, "ray parameter file (RAYP)");

  bool inject_fault = false;
  CLI::App* selftest =
      app.add_subcommand("selftest", "run the acceptance checks");
  selftest
      ->add_flag("--inject-fault", inject_fault,
                 "test hook: corrupt a triplane value (the suite must fail)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g.threads > 0) set_max_threads(g.threads);
    if (epicurve->parsed()) return cmd_epicurve(g, eo);
    if (mask->parsed()) return cmd_mask(g, mo);
    if (bench->parsed()) return cmd_bench(g, bo);
    if (trace->parsed()) return cmd_trace(g, to);
    if (selftest->parsed()) return cmd_selftest(g, inject_fault);
  } catch (const DegenerateGeometryError& e) {
    std::cerr << "degenerate geometry: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
