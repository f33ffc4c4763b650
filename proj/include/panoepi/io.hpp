#pragma once

// Serialization:
//   - triplane files   ("TPLN", version 1): extents as f64, features as f32
//   - ray attn params  ("RAYP", version 1): all f64
//   - epipolar masks   ("EPMK", version 1): per-query candidate lists
//   - trajectories     as whitespace-separated text or JSON
//   - PPM/PGM images   for curve visualization
// All binary formats are little-endian regardless of host order.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "panoepi/epipolar.hpp"
#include "panoepi/ray_attention.hpp"
#include "panoepi/sequence.hpp"
#include "panoepi/triplane.hpp"

namespace panoepi {

void write_triplane(const std::filesystem::path& path, const Triplane& tp);
// Features were stored as f32; loading validates dimensions, extents and
// finiteness and throws IoError on malformed files.
Triplane read_triplane(const std::filesystem::path& path);

void write_ray_params(const std::filesystem::path& path,
                      const RayAttentionParams& params);
RayAttentionParams read_ray_params(const std::filesystem::path& path);

struct TrajectoryParseOptions {
  // Height assigned to 4-field rows (id x y yaw).
  double default_height = 1.6;
  // Used when the file does not carry an extent (text files never do).
  GroundExtent extent;
};

// Text rows: `id x y z yaw` or `id x y yaw`; '#' starts a comment; blank
// lines are skipped. The parsed trajectory is validated (increasing ids,
// positions inside the extent).
Trajectory parse_trajectory_text(std::istream& in,
                                 const TrajectoryParseOptions& opts = {});
// JSON: {"satellite_extent": {"x_min": ..}, "frames": [{"id", "x", "y",
// "z"?, "yaw"}]}; satellite_extent and z are optional.
Trajectory parse_trajectory_json(std::istream& in,
                                 const TrajectoryParseOptions& opts = {});
// Dispatches on the ".json" extension.
Trajectory load_trajectory(const std::filesystem::path& path,
                           const TrajectoryParseOptions& opts = {});
void write_trajectory_text(const std::filesystem::path& path,
                           const Trajectory& traj);

struct MaskFile {
  EquirectGrid grid{2, 2};
  MaskConfig config;
  std::vector<EpipolarMask> masks;
};

void write_mask_csr(const std::filesystem::path& path, const EquirectGrid& grid,
                    const MaskConfig& cfg, std::span<const EpipolarMask> masks);
MaskFile read_mask_csr(const std::filesystem::path& path);

struct ImageRGB {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height, row-major

  ImageRGB(int w, int h)
      : width(w), height(h),
        data(static_cast<size_t>(3) * w * h, 0) {}
  void set(int col, int row, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    size_t i = (static_cast<size_t>(row) * width + col) * 3;
    data[i] = r;
    data[i + 1] = g;
    data[i + 2] = b;
  }
};

struct ImageGray {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  ImageGray(int w, int h)
      : width(w), height(h), data(static_cast<size_t>(w) * h, 0) {}
  void set(int col, int row, std::uint8_t v) {
    data[static_cast<size_t>(row) * width + col] = v;
  }
};

void write_ppm(const std::filesystem::path& path, const ImageRGB& img);
void write_pgm(const std::filesystem::path& path, const ImageGray& img);

// FNV-1a, used to derive cache file names.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace panoepi
