#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "panoepi/io.hpp"
#include "panoepi/reference.hpp"

using namespace panoepi;

namespace {

// Unique scratch directory per test run, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("panoepi-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path file(const char* name) const { return path / name; }
  static inline int counter = 0;
};

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("triplane files round-trip through float32 storage") {
  TempDir dir;
  ref::Rng rng(50);
  Triplane tp = ref::random_triplane(rng, 5, 7, 3,
                                     {-4.0, 12.0, -8.0, 8.0, 0.0, 6.0});
  write_triplane(dir.file("scene.tpln"), tp);
  Triplane back = read_triplane(dir.file("scene.tpln"));

  CHECK(back.channels() == 3);
  CHECK(back.xy.rows == 5);
  CHECK(back.xy.cols == 7);
  CHECK(back.xy.a_min == -4.0);  // extents are stored at full precision
  CHECK(back.yz.b_max == 6.0);
  for (const PlaneAxes axes : {PlaneAxes::XY, PlaneAxes::XZ, PlaneAxes::YZ}) {
    const FeaturePlane &a = tp.plane(axes), &b = back.plane(axes);
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i)
      CHECK(b.data[i] == static_cast<double>(static_cast<float>(a.data[i])));
  }
}

TEST_CASE("malformed triplane files are rejected") {
  TempDir dir;
  ref::Rng rng(51);
  Triplane tp = ref::random_triplane(rng, 3, 3, 2,
                                     {0.0, 1.0, 0.0, 1.0, 0.0, 1.0});
  write_triplane(dir.file("ok.tpln"), tp);
  std::vector<char> bytes = slurp(dir.file("ok.tpln"));

  CHECK_THROWS_AS(read_triplane(dir.file("missing.tpln")), IoError);

  std::vector<char> bad = bytes;
  bad[0] = 'X';
  spit(dir.file("magic.tpln"), bad);
  CHECK_THROWS_AS(read_triplane(dir.file("magic.tpln")), IoError);

  bad = bytes;
  bad[4] = 9;  // version
  spit(dir.file("version.tpln"), bad);
  CHECK_THROWS_AS(read_triplane(dir.file("version.tpln")), IoError);

  bad = bytes;
  bad.resize(bytes.size() - 3);
  spit(dir.file("short.tpln"), bad);
  CHECK_THROWS_AS(read_triplane(dir.file("short.tpln")), IoError);

  bad = bytes;
  bad.push_back(0);
  spit(dir.file("long.tpln"), bad);
  CHECK_THROWS_AS(read_triplane(dir.file("long.tpln")), IoError);
}

TEST_CASE("ray parameter files round-trip exactly") {
  TempDir dir;
  ref::Rng rng(52);
  RaySampleConfig cfg{6, 2, 1.5, 44.0};
  RayAttentionParams p = ref::random_ray_params(rng, cfg, 4, 0.7, true, true);
  write_ray_params(dir.file("p.rayp"), p);
  RayAttentionParams back = read_ray_params(dir.file("p.rayp"));

  CHECK(back.along_ray_only == p.along_ray_only);
  CHECK(back.per_channel == p.per_channel);
  CHECK(back.head_weights == p.head_weights);  // f64: bit-exact
  CHECK(back.logits == p.logits);
  CHECK(back.offsets == p.offsets);
  CHECK_NOTHROW(back.validate(cfg, 4));

  std::vector<char> bytes = slurp(dir.file("p.rayp"));
  bytes[1] = 'X';
  spit(dir.file("bad.rayp"), bytes);
  CHECK_THROWS_AS(read_ray_params(dir.file("bad.rayp")), IoError);
}

TEST_CASE("trajectory text accepts 4- and 5-field rows and comments") {
  std::istringstream in(
      "# survey poses\n"
      "0 0.0 0.0 1.8 0.0\n"
      "\n"
      "2 10.0 0.0 0.3   # five fields: explicit height\n"
      "5 20.0 5.0 1.5707963267948966\n");
  Trajectory t = parse_trajectory_text(in);
  REQUIRE(t.size() == 3);
  CHECK(t.frames[0].id == 0);
  CHECK(t.frames[0].pose.position.z() == 1.8);
  CHECK(t.frames[1].id == 2);
  // 4-field rows get the default height.
  CHECK(t.frames[1].pose.position.z() == 1.6);
  CHECK(t.frames[1].pose.yaw == 0.3);
  CHECK(t.frames[2].pose.position.x() == 20.0);
  CHECK(t.frames[2].pose.yaw == doctest::Approx(kPi / 2).epsilon(1e-12));

  TrajectoryParseOptions tall;
  tall.default_height = 30.0;
  std::istringstream in2("7 1 2 0.5\n");
  CHECK(parse_trajectory_text(in2, tall).frames[0].pose.position.z() == 30.0);
}

TEST_CASE("bad trajectory rows are reported with their line number") {
  auto expect_line = [](const char* text, const char* needle) {
    std::istringstream in(text);
    try {
      parse_trajectory_text(in);
      CHECK(false);
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_line("0 0 0 0 0\n1 1 1\n", "line 2");
  expect_line("0 0 0 zero\n", "bad number 'zero'");
  expect_line("0.5 0 0 0\n", "integer");
  expect_line("0 1 2 3 4 5\n", "fields");

  // Semantic problems surface as domain errors, not file errors.
  std::istringstream decreasing("3 0 0 0\n1 5 0 0\n");
  CHECK_THROWS_AS(parse_trajectory_text(decreasing), DomainError);
  std::istringstream outside("0 5000 0 0\n");
  CHECK_THROWS_AS(parse_trajectory_text(outside), DomainError);
}

TEST_CASE("trajectory text writing is lossless") {
  TempDir dir;
  ref::Rng rng(53);
  Trajectory t;
  for (int i = 0; i < 6; ++i)
    t.frames.push_back(
        {i * 3, ref::random_pose4dof(rng, t.extent, 0.5, 40.0)});
  write_trajectory_text(dir.file("t.txt"), t);
  Trajectory back = load_trajectory(dir.file("t.txt"));
  REQUIRE(back.size() == t.size());
  for (int i = 0; i < t.size(); ++i) {
    CHECK(back.frames[i].id == t.frames[i].id);
    CHECK(back.frames[i].pose.position == t.frames[i].pose.position);
    CHECK(back.frames[i].pose.yaw == t.frames[i].pose.yaw);
  }
}

TEST_CASE("JSON trajectories carry an optional extent and heights") {
  std::istringstream in(R"({
    "satellite_extent": {"x_min": -30, "x_max": 30, "y_min": -20, "y_max": 20},
    "frames": [
      {"id": 0, "x": 0, "y": 0, "yaw": 0},
      {"id": 1, "x": 12, "y": 3, "z": 2.5, "yaw": -1.2}
    ]
  })");
  Trajectory t = parse_trajectory_json(in);
  REQUIRE(t.size() == 2);
  CHECK(t.extent.x_min == -30.0);
  CHECK(t.extent.y_max == 20.0);
  CHECK(t.frames[0].pose.position.z() == 1.6);
  CHECK(t.frames[1].pose.position.z() == 2.5);
  CHECK(t.frames[1].pose.yaw == -1.2);

  std::istringstream garbage("{not json");
  CHECK_THROWS_AS(parse_trajectory_json(garbage), IoError);
  std::istringstream missing(R"({"frames": [{"id": 0, "x": 1}]})");
  CHECK_THROWS_AS(parse_trajectory_json(missing), IoError);
  // A frame outside the declared extent is a semantic error.
  std::istringstream outside(R"({
    "satellite_extent": {"x_min": 0, "x_max": 1, "y_min": 0, "y_max": 1},
    "frames": [{"id": 0, "x": 5, "y": 0, "yaw": 0}]
  })");
  CHECK_THROWS_AS(parse_trajectory_json(outside), DomainError);
}

TEST_CASE("load_trajectory dispatches on the file extension") {
  TempDir dir;
  {
    std::ofstream txt(dir.file("a.txt"));
    txt << "0 1 2 0.5\n";
    std::ofstream js(dir.file("a.json"));
    js << R"({"frames": [{"id": 4, "x": 1, "y": 2, "yaw": 0.5}]})";
  }
  CHECK(load_trajectory(dir.file("a.txt")).frames[0].id == 0);
  CHECK(load_trajectory(dir.file("a.json")).frames[0].id == 4);
  CHECK_THROWS_AS(load_trajectory(dir.file("nope.txt")), IoError);
}

TEST_CASE("mask files round-trip candidates and flags") {
  TempDir dir;
  EquirectGrid grid(16, 8);
  MaskConfig cfg{2e-3, 2};

  std::vector<EpipolarMask> masks(3);
  masks[0].query = {1.5, 2.5};
  masks[0].candidates = {{0, 1}, {0, 2}, {5, 7}};
  masks[0].degenerate_columns = 1;
  masks[1].query = {3.5, 4.5};
  masks[1].epipole_full = true;
  masks[2].query = {0.5, 0.5};  // empty candidate list

  write_mask_csr(dir.file("m.epmk"), grid, cfg, masks);
  MaskFile back = read_mask_csr(dir.file("m.epmk"));

  CHECK(back.grid.width == 16);
  CHECK(back.grid.height == 8);
  CHECK(back.config.eps == 2e-3);
  CHECK(back.config.band_halfwidth == 2);
  REQUIRE(back.masks.size() == 3);
  CHECK(back.masks[0].query == Eigen::Vector2d(1.5, 2.5));
  REQUIRE(back.masks[0].candidates.size() == 3);
  CHECK(back.masks[0].candidates[2].col == 5);
  CHECK(back.masks[0].candidates[2].row == 7);
  CHECK(back.masks[0].degenerate_columns == 1);
  CHECK(back.masks[0].band_halfwidth == 2);
  CHECK(back.masks[0].tolerance ==
        doctest::Approx(std::sin(2.5 * kPi / 8)).epsilon(1e-12));
  CHECK(back.masks[1].epipole_full);
  CHECK(back.masks[2].candidates.empty());

  // A candidate outside the stored grid makes the file invalid.
  std::vector<EpipolarMask> bad(1);
  bad[0].candidates = {{16, 0}};
  write_mask_csr(dir.file("bad.epmk"), grid, cfg, bad);
  CHECK_THROWS_AS(read_mask_csr(dir.file("bad.epmk")), IoError);
}

TEST_CASE("curve images are written with standard binary headers") {
  TempDir dir;
  ImageRGB rgb(4, 2);
  rgb.set(1, 0, 10, 20, 30);
  write_ppm(dir.file("img.ppm"), rgb);
  std::vector<char> bytes = slurp(dir.file("img.ppm"));
  std::string header(bytes.begin(), bytes.begin() + 9);
  CHECK(header == "P6\n4 2\n25");  // "255\n" continues
  CHECK(bytes.size() == 11 + 4 * 2 * 3);
  CHECK(bytes[11 + 3] == 10);
  CHECK(bytes[11 + 4] == 20);

  ImageGray gray(3, 3);
  gray.set(2, 2, 99);
  write_pgm(dir.file("img.pgm"), gray);
  std::vector<char> gbytes = slurp(dir.file("img.pgm"));
  CHECK(gbytes.size() == 11 + 9);
  CHECK(gbytes.back() == 99);
}

TEST_CASE("hash of cache keys follows the reference constants") {
  CHECK(fnv1a64({}) == 14695981039346656037ull);
  const std::uint8_t a[] = {'a'};
  CHECK(fnv1a64(a) == 0xaf63dc4c8601ec8cull);
  const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(fnv1a64(foobar) == 0x85944171f73967e8ull);
}
