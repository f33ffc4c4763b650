#include "panoepi/sequence.hpp"

#include <cmath>
#include <string>

namespace panoepi {

void Trajectory::validate() const {
  for (size_t i = 1; i < frames.size(); ++i)
    if (frames[i].id <= frames[i - 1].id)
      throw DomainError("frame ids must be strictly increasing (frame " +
                        std::to_string(i) + " has id " +
                        std::to_string(frames[i].id) + " after " +
                        std::to_string(frames[i - 1].id) + ")");
  if (!(extent.x_min < extent.x_max) || !(extent.y_min < extent.y_max))
    throw DomainError("ground extent is empty");
  for (size_t i = 0; i < frames.size(); ++i) {
    const Eigen::Vector3d& p = frames[i].pose.position;
    if (p.x() < extent.x_min || p.x() > extent.x_max || p.y() < extent.y_min ||
        p.y() > extent.y_max)
      throw DomainError("frame " + std::to_string(frames[i].id) + " at (" +
                        std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                        ") lies outside the ground extent");
  }
}

std::vector<int> Trajectory::close_pairs(double min_spacing) const {
  std::vector<int> out;
  for (size_t i = 0; i + 1 < frames.size(); ++i) {
    double d = (frames[i + 1].pose.position - frames[i].pose.position).norm();
    if (d < min_spacing) out.push_back(static_cast<int>(i));
  }
  return out;
}

Schedule dense_schedule(int frames) {
  if (frames < 1) throw DomainError("frame count must be >= 1");
  Schedule s(frames);
  for (int i = 0; i < frames; ++i)
    for (int j = 0; j < frames; ++j)
      if (j != i) s[i].push_back(j);
  return s;
}

Schedule sparse_schedule(int frames, int window) {
  if (frames < 1) throw DomainError("frame count must be >= 1");
  if (window < 1) throw DomainError("window must be >= 1");
  Schedule s(frames);
  for (int i = 0; i < frames; ++i)
    for (int k = 1; k <= window && i - k >= 0; ++k)
      s[i].push_back(i - k);  // most recent first
  return s;
}

std::uint64_t schedule_pair_count(const Schedule& schedule) {
  std::uint64_t n = 0;
  for (const auto& s : schedule) n += s.size();
  return n;
}

EpipolarMask TrajectoryMasks::mask_for(int pair_index,
                                       const Eigen::Vector2d& query) const {
  const Pair& p = pairs_.at(pair_index);
  return epipolar_mask(query, p.essential, grid_, cfg_.eps,
                       cfg_.band_halfwidth);
}

std::vector<EpipolarMask> TrajectoryMasks::masks_for_pair(
    int pair_index) const {
  const Pair& p = pairs_.at(pair_index);
  const long long n = grid_.pixel_count();
  std::vector<EpipolarMask> out(n);
#pragma omp parallel for schedule(static)
  for (long long q = 0; q < n; ++q) {
    int row = static_cast<int>(q / grid_.width);
    int col = static_cast<int>(q % grid_.width);
    out[q] = epipolar_mask(grid_.pixel_center(col, row), p.essential, grid_,
                           cfg_.eps, cfg_.band_halfwidth);
  }
  return out;
}

TrajectoryMasks build_frame_masks(const Trajectory& traj,
                                  const Schedule& schedule,
                                  const EquirectGrid& grid,
                                  const MaskConfig& cfg) {
  traj.validate();
  if (static_cast<int>(schedule.size()) != traj.size())
    throw ShapeError("schedule has " + std::to_string(schedule.size()) +
                     " entries for " + std::to_string(traj.size()) +
                     " frames");
  TrajectoryMasks masks(grid, cfg);
  for (int i = 0; i < traj.size(); ++i) {
    PoseSE3 pose_i = pose4dof_to_se3(traj.frames[i].pose);
    for (int j : schedule[i]) {
      if (j < 0 || j >= traj.size() || j == i)
        throw DomainError("invalid schedule entry " + std::to_string(j) +
                          " for frame " + std::to_string(i));
      PoseSE3 pose_j = pose4dof_to_se3(traj.frames[j].pose);
      // essential() reports a zero baseline with both frame ids.
      masks.pairs_.push_back(
          {i, j,
           essential(relative_pose(pose_i, pose_j),
                     static_cast<int>(traj.frames[i].id),
                     static_cast<int>(traj.frames[j].id))});
    }
  }
  return masks;
}

PairMaskStats pair_mask_stats(const TrajectoryMasks& masks, int pair_index) {
  const EquirectGrid& grid = masks.grid();
  const std::uint64_t hw = grid.pixel_count();
  std::vector<EpipolarMask> all = masks.masks_for_pair(pair_index);
  PairMaskStats st;
  st.queries = all.size();
  for (const EpipolarMask& m : all) {
    std::uint64_t sz = m.epipole_full ? hw : m.candidates.size();
    st.total_candidates += sz;
    st.max_candidates = std::max(st.max_candidates, sz);
    if (m.degenerate_columns > 0) ++st.degenerate_queries;
    if (m.epipole_full) ++st.epipole_queries;
  }
  return st;
}

EquirectGrid downscale_grid(const EquirectGrid& grid, int levels) {
  if (levels < 0) throw DomainError("downscale levels must be >= 0");
  int f = 1 << levels;
  if (grid.width % f != 0 || grid.height % f != 0)
    throw DomainError("grid " + std::to_string(grid.width) + "x" +
                      std::to_string(grid.height) +
                      " is not divisible by 2^" + std::to_string(levels));
  return {grid.width / f, grid.height / f};
}

}  // namespace panoepi
