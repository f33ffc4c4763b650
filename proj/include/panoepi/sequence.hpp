#pragma once

// Camera trajectories over a bounded ground area and the frame-visitation
// schedules used for inter-view attention: dense (every ordered pair) and
// sparse/causal (each frame attends a window of preceding frames only).

#include <cstdint>
#include <string>
#include <vector>

#include "panoepi/attention.hpp"
#include "panoepi/camera.hpp"
#include "panoepi/epipolar.hpp"

namespace panoepi {

struct TrajectoryFrame {
  long long id = 0;
  Pose4DoF pose;
};

// Axis-aligned ground rectangle the scene covers.
struct GroundExtent {
  double x_min = -100.0, x_max = 100.0;
  double y_min = -100.0, y_max = 100.0;
};

struct Trajectory {
  std::vector<TrajectoryFrame> frames;
  GroundExtent extent;

  int size() const { return static_cast<int>(frames.size()); }
  // Frame ids strictly increasing, (x, y) positions inside the extent.
  void validate() const;
  // Indices i where frames i and i+1 are closer than min_spacing meters
  // (close poses make the epipolar constraint uninformative).
  std::vector<int> close_pairs(double min_spacing = 8.0) const;
};

// schedule[i] = all j != i.
Schedule dense_schedule(int frames);
// schedule[i] = {i-1, ..., i-window}, clipped at 0 (causal, acyclic).
Schedule sparse_schedule(int frames, int window = 2);

std::uint64_t schedule_pair_count(const Schedule& schedule);

struct MaskConfig {
  double eps = 1e-3;
  int band_halfwidth = 1;
};

// Epipolar geometry of every scheduled frame pair of a trajectory, with
// on-demand per-query masks. The essential matrix of a pair is computed
// once and reused for all its queries.
class TrajectoryMasks {
 public:
  struct Pair {
    int query_frame = 0;
    int source_frame = 0;
    EssentialMatrix essential;
  };

  TrajectoryMasks(EquirectGrid grid, MaskConfig cfg) : grid_(grid), cfg_(cfg) {}

  const std::vector<Pair>& pairs() const { return pairs_; }
  const EquirectGrid& grid() const { return grid_; }
  const MaskConfig& config() const { return cfg_; }

  EpipolarMask mask_for(int pair_index, const Eigen::Vector2d& query) const;
  // Masks of every pixel center of the query frame, row-major. Parallel
  // over queries; the result is deterministic.
  std::vector<EpipolarMask> masks_for_pair(int pair_index) const;

 private:
  friend TrajectoryMasks build_frame_masks(const Trajectory&, const Schedule&,
                                           const EquirectGrid&,
                                           const MaskConfig&);
  EquirectGrid grid_;
  MaskConfig cfg_;
  std::vector<Pair> pairs_;
};

// Throws DegenerateGeometryError naming the frames when a scheduled pair
// has a zero baseline.
TrajectoryMasks build_frame_masks(const Trajectory& traj,
                                  const Schedule& schedule,
                                  const EquirectGrid& grid,
                                  const MaskConfig& cfg);

// Aggregate mask statistics of one frame pair.
struct PairMaskStats {
  std::uint64_t queries = 0;
  std::uint64_t total_candidates = 0;   // epipole-full queries count as H*W
  std::uint64_t max_candidates = 0;
  std::uint64_t degenerate_queries = 0; // queries with full columns
  std::uint64_t epipole_queries = 0;
  double mean_candidates() const {
    return queries ? static_cast<double>(total_candidates) / queries : 0.0;
  }
};

PairMaskStats pair_mask_stats(const TrajectoryMasks& masks, int pair_index);

// Halves both grid dimensions `levels` times; throws DomainError when a
// dimension is not divisible by 2^levels.
EquirectGrid downscale_grid(const EquirectGrid& grid, int levels);

}  // namespace panoepi
