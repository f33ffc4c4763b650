#include "panoepi/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace panoepi {

namespace {

class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void close() {
    out_.close();
    if (!out_) throw IoError("write to " + path_.string() + " failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    buf_.assign(std::istreambuf_iterator<char>(in),
                std::istreambuf_iterator<char>());
  }
  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw IoError(path_.string() + ": truncated file");
  }
  void magic(const char* m) {
    need(4);
    for (int i = 0; i < 4; ++i)
      if (buf_[pos_ + i] != static_cast<std::uint8_t>(m[i]))
        throw IoError(path_.string() + ": bad magic, expected " +
                      std::string(m, 4));
    pos_ += 4;
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | buf_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<std::uint8_t> buf_;
  size_t pos_ = 0;
};

void write_plane(BinWriter& w, const FeaturePlane& p) {
  w.u32(static_cast<std::uint32_t>(p.rows));
  w.u32(static_cast<std::uint32_t>(p.cols));
  w.f64(p.a_min);
  w.f64(p.a_max);
  w.f64(p.b_min);
  w.f64(p.b_max);
  for (double v : p.data) w.f32(static_cast<float>(v));
}

FeaturePlane read_plane(BinReader& r, PlaneAxes axes, int channels) {
  std::uint32_t rows = r.u32(), cols = r.u32();
  double a0 = r.f64(), a1 = r.f64(), b0 = r.f64(), b1 = r.f64();
  if (rows < 2 || cols < 2 || rows > (1u << 20) || cols > (1u << 20))
    throw IoError(r.path().string() + ": implausible plane dimensions " +
                  std::to_string(rows) + "x" + std::to_string(cols));
  FeaturePlane p(axes, static_cast<int>(rows), static_cast<int>(cols),
                 channels, a0, a1, b0, b1);
  for (double& v : p.data) v = r.f32();
  return p;
}

}  // namespace

void write_triplane(const std::filesystem::path& path, const Triplane& tp) {
  BinWriter w(path);
  w.bytes("TPLN", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(tp.channels()));
  write_plane(w, tp.xy);
  write_plane(w, tp.xz);
  write_plane(w, tp.yz);
  w.close();
}

Triplane read_triplane(const std::filesystem::path& path) {
  BinReader r(path);
  r.magic("TPLN");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError(path.string() + ": unsupported triplane version " +
                  std::to_string(version));
  std::uint32_t channels = r.u32();
  if (channels < 1 || channels > (1u << 16))
    throw IoError(path.string() + ": implausible channel count " +
                  std::to_string(channels));
  try {
    FeaturePlane xy = read_plane(r, PlaneAxes::XY, channels);
    FeaturePlane xz = read_plane(r, PlaneAxes::XZ, channels);
    FeaturePlane yz = read_plane(r, PlaneAxes::YZ, channels);
    if (!r.at_end())
      throw IoError(path.string() + ": trailing bytes after triplane data");
    return Triplane(std::move(xy), std::move(xz), std::move(yz));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    // Extent mismatches, NaNs etc. become file-format errors here.
    throw IoError(path.string() + ": invalid triplane file: " + e.what());
  }
}

void write_ray_params(const std::filesystem::path& path,
                      const RayAttentionParams& params) {
  BinWriter w(path);
  w.bytes("RAYP", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(params.logits.rows()));   // K
  w.u32(static_cast<std::uint32_t>(params.logits.cols()));   // J
  w.u8(static_cast<std::uint8_t>((params.along_ray_only ? 1 : 0) |
                                 (params.per_channel ? 2 : 0)));
  w.u32(static_cast<std::uint32_t>(params.head_weights.cols()));
  for (long r = 0; r < params.head_weights.rows(); ++r)
    for (long c = 0; c < params.head_weights.cols(); ++c)
      w.f64(params.head_weights(r, c));
  for (long r = 0; r < params.logits.rows(); ++r)
    for (long c = 0; c < params.logits.cols(); ++c) w.f64(params.logits(r, c));
  for (long r = 0; r < params.offsets.rows(); ++r)
    for (long c = 0; c < 3; ++c) w.f64(params.offsets(r, c));
  w.close();
}

RayAttentionParams read_ray_params(const std::filesystem::path& path) {
  BinReader r(path);
  r.magic("RAYP");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError(path.string() + ": unsupported ray-params version " +
                  std::to_string(version));
  std::uint32_t k = r.u32(), j = r.u32();
  if (k < 1 || j < 1 || k > (1u << 20) || j > (1u << 20))
    throw IoError(path.string() + ": implausible K=" + std::to_string(k) +
                  " J=" + std::to_string(j));
  std::uint8_t flags = r.u8();
  std::uint32_t wcols = r.u32();
  if (wcols < 1 || wcols > (1u << 16))
    throw IoError(path.string() + ": implausible head-weight width");
  RayAttentionParams p;
  p.along_ray_only = (flags & 1) != 0;
  p.per_channel = (flags & 2) != 0;
  p.head_weights.resize(j, wcols);
  for (std::uint32_t a = 0; a < j; ++a)
    for (std::uint32_t b = 0; b < wcols; ++b) p.head_weights(a, b) = r.f64();
  p.logits.resize(k, j);
  for (std::uint32_t a = 0; a < k; ++a)
    for (std::uint32_t b = 0; b < j; ++b) p.logits(a, b) = r.f64();
  p.offsets.resize(static_cast<long>(k) * j, 3);
  for (long a = 0; a < p.offsets.rows(); ++a)
    for (int b = 0; b < 3; ++b) p.offsets(a, b) = r.f64();
  if (!r.at_end())
    throw IoError(path.string() + ": trailing bytes after ray parameters");
  if (!p.head_weights.allFinite() || !p.logits.allFinite() ||
      !p.offsets.allFinite())
    throw IoError(path.string() + ": non-finite ray parameters");
  return p;
}

namespace {

double parse_number(const std::string& tok, int line_no) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw IoError("line " + std::to_string(line_no) + ": bad number '" + tok +
                  "'");
  }
  if (used != tok.size())
    throw IoError("line " + std::to_string(line_no) + ": bad number '" + tok +
                  "'");
  return v;
}

}  // namespace

Trajectory parse_trajectory_text(std::istream& in,
                                 const TrajectoryParseOptions& opts) {
  Trajectory traj;
  traj.extent = opts.extent;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 4 && tok.size() != 5)
      throw IoError("line " + std::to_string(line_no) + ": expected "
                    "'id x y z yaw' or 'id x y yaw', got " +
                    std::to_string(tok.size()) + " fields");
    double idv = parse_number(tok[0], line_no);
    if (idv != std::floor(idv))
      throw IoError("line " + std::to_string(line_no) +
                    ": frame id must be an integer");
    double x = parse_number(tok[1], line_no);
    double y = parse_number(tok[2], line_no);
    double z = tok.size() == 5 ? parse_number(tok[3], line_no)
                               : opts.default_height;
    double yaw = parse_number(tok.back(), line_no);
    traj.frames.push_back(
        {static_cast<long long>(idv), Pose4DoF({x, y, z}, yaw)});
  }
  traj.validate();
  return traj;
}

Trajectory parse_trajectory_json(std::istream& in,
                                 const TrajectoryParseOptions& opts) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad trajectory JSON: ") + e.what());
  }
  Trajectory traj;
  traj.extent = opts.extent;
  try {
    if (doc.contains("satellite_extent")) {
      const auto& e = doc.at("satellite_extent");
      traj.extent = {e.at("x_min").get<double>(), e.at("x_max").get<double>(),
                     e.at("y_min").get<double>(), e.at("y_max").get<double>()};
    }
    for (const auto& f : doc.at("frames")) {
      double z = f.contains("z") ? f.at("z").get<double>()
                                 : opts.default_height;
      traj.frames.push_back(
          {f.at("id").get<long long>(),
           Pose4DoF({f.at("x").get<double>(), f.at("y").get<double>(), z},
                    f.at("yaw").get<double>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad trajectory JSON: ") + e.what());
  }
  traj.validate();
  return traj;
}

Trajectory load_trajectory(const std::filesystem::path& path,
                           const TrajectoryParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  if (path.extension() == ".json") return parse_trajectory_json(in, opts);
  return parse_trajectory_text(in, opts);
}

void write_trajectory_text(const std::filesystem::path& path,
                           const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# id x y z yaw\n";
  char buf[256];
  for (const TrajectoryFrame& f : traj.frames) {
    std::snprintf(buf, sizeof(buf), "%lld %.17g %.17g %.17g %.17g\n", f.id,
                  f.pose.position.x(), f.pose.position.y(),
                  f.pose.position.z(), f.pose.yaw);
    out << buf;
  }
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void write_mask_csr(const std::filesystem::path& path,
                    const EquirectGrid& grid, const MaskConfig& cfg,
                    std::span<const EpipolarMask> masks) {
  BinWriter w(path);
  w.bytes("EPMK", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(grid.width));
  w.u32(static_cast<std::uint32_t>(grid.height));
  w.f64(cfg.eps);
  w.u32(static_cast<std::uint32_t>(cfg.band_halfwidth));
  w.u64(masks.size());
  for (const EpipolarMask& m : masks) {
    w.f64(m.query.x());
    w.f64(m.query.y());
    w.u8(m.epipole_full ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(m.degenerate_columns));
    w.u64(m.candidates.size());
    for (const EpipolarMask::Candidate& c : m.candidates) {
      w.u32(static_cast<std::uint32_t>(c.col));
      w.u32(static_cast<std::uint32_t>(c.row));
    }
  }
  w.close();
}

MaskFile read_mask_csr(const std::filesystem::path& path) {
  BinReader r(path);
  r.magic("EPMK");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError(path.string() + ": unsupported mask file version " +
                  std::to_string(version));
  std::uint32_t w = r.u32(), h = r.u32();
  double eps = r.f64();
  std::uint32_t band = r.u32();
  if (w < 2 || h < 2 || w > (1u << 20) || h > (1u << 20) || !(eps > 0.0) ||
      band > (1u << 20))
    throw IoError(path.string() + ": implausible mask file header");
  MaskFile file{EquirectGrid(static_cast<int>(w), static_cast<int>(h)),
                MaskConfig{eps, static_cast<int>(band)},
                {}};
  double tol = std::max(eps, std::sin((band + 0.5) * kPi / h));
  std::uint64_t n = r.u64();
  file.masks.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    EpipolarMask& m = file.masks[i];
    m.query = {r.f64(), r.f64()};
    m.epipole_full = (r.u8() & 1) != 0;
    m.degenerate_columns = static_cast<int>(r.u32());
    m.band_halfwidth = static_cast<int>(band);
    m.tolerance = tol;
    std::uint64_t cnt = r.u64();
    m.candidates.resize(cnt);
    for (std::uint64_t c = 0; c < cnt; ++c) {
      std::uint32_t col = r.u32(), row = r.u32();
      if (col >= w || row >= h)
        throw IoError(path.string() + ": candidate outside the grid");
      m.candidates[c] = {static_cast<int>(col), static_cast<int>(row)};
    }
  }
  if (!r.at_end())
    throw IoError(path.string() + ": trailing bytes after mask data");
  return file;
}

void write_ppm(const std::filesystem::path& path, const ImageRGB& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void write_pgm(const std::filesystem::path& path, const ImageGray& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace panoepi
