#include "panoepi/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "panoepi/attention.hpp"
#include "panoepi/reference.hpp"

namespace panoepi {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Well-spaced loop inside the ground extent; adjacent frames are ~2*r*pi/n
// apart so the epipolar geometry stays far from the zero-baseline regime.
Trajectory circle_trajectory(int n, ref::Rng& rng) {
  Trajectory traj;
  double radius = 80.0;
  for (int i = 0; i < n; ++i) {
    double a = 2.0 * kPi * i / n + ref::uniform(rng, -0.1, 0.1) / n;
    Eigen::Vector3d pos(radius * std::cos(a), radius * std::sin(a),
                        ref::uniform(rng, 1.2, 2.2));
    traj.frames.push_back({i, Pose4DoF(pos, a + kPi / 2)});
  }
  return traj;
}

}  // namespace

const BenchRow* BenchResult::find(int frames, std::string_view strategy) const {
  for (const BenchRow& r : rows)
    if (r.frames == frames && r.strategy == strategy) return &r;
  return nullptr;
}

BenchResult run_bench(const BenchSpec& spec) {
  if (spec.repetitions < 3)
    throw DomainError("benchmark needs >= 3 repetitions");
  if (spec.frame_counts.empty())
    throw DomainError("benchmark needs at least one frame count");
  for (int n : spec.frame_counts)
    if (n < 1) throw DomainError("frame counts must be >= 1");
  if (spec.channels < 1) throw DomainError("channel count must be >= 1");

  const std::uint64_t hw = spec.grid.pixel_count();
  BenchResult result;

  for (int n : spec.frame_counts) {
    ref::Rng rng(spec.seed ^ (0x9e3779b97f4a7c15ull * (n + 1)));
    Trajectory traj = circle_trajectory(n, rng);
    AttentionParams params = ref::random_attention_params(rng, spec.channels);
    std::vector<Eigen::MatrixXd> features(n);
    for (int i = 0; i < n; ++i)
      features[i] =
          ref::random_features(rng, static_cast<long>(hw), spec.channels);

    // ---- dense: every frame attends the concatenation of all others ----
    {
      BenchRow row;
      row.frames = n;
      row.strategy = "dense";
      row.frame_pairs = static_cast<std::uint64_t>(n) * (n - 1);
      row.peak_score_buffer = n > 1 ? hw * (n - 1) * hw : 0;
      if (row.peak_score_buffer > spec.max_score_buffer) {
        row.capped = true;
        row.median_seconds = std::numeric_limits<double>::quiet_NaN();
      } else {
        std::vector<Eigen::MatrixXd> concat(n);
        for (int i = 0; i < n; ++i) {
          concat[i].resize(static_cast<long>(hw) * (n - 1), spec.channels);
          long at = 0;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            concat[i].middleRows(at, static_cast<long>(hw)) = features[j];
            at += static_cast<long>(hw);
          }
        }
        std::vector<double> times;
        AttentionStats stats;
        for (int rep = 0; rep < spec.repetitions; ++rep) {
          AttentionStats rep_stats;
          double t0 = now_seconds();
          for (int i = 0; i < n; ++i)
            if (n > 1) full_attention(features[i], concat[i], params,
                                      &rep_stats);
          times.push_back(now_seconds() - t0);
          stats = rep_stats;
        }
        row.score_evaluations = stats.score_evaluations;
        row.median_seconds = median(times);
      }
      result.rows.push_back(std::move(row));
    }

    // ---- sparse: causal window with epipolar masks ----
    {
      BenchRow row;
      row.frames = n;
      row.strategy = "sparse";
      Schedule schedule = sparse_schedule(n, spec.window);
      row.frame_pairs = schedule_pair_count(schedule);

      TrajectoryMasks masks =
          build_frame_masks(traj, schedule, spec.grid, spec.mask);

      // Per query frame: its key/value frames and per-query candidate lists
      // (candidate.frame indexes into the frame's kv list).
      std::vector<std::vector<Eigen::MatrixXd>> kv(n);
      std::vector<std::vector<QueryMask>> qmasks(n);
      int pair_index = 0;
      std::uint64_t max_context = 0;
      for (int i = 0; i < n; ++i) {
        if (schedule[i].empty()) continue;
        qmasks[i].assign(hw, {});
        for (size_t s = 0; s < schedule[i].size(); ++s) {
          int j = schedule[i][s];
          kv[i].push_back(features[j]);
          std::vector<EpipolarMask> pm = masks.masks_for_pair(pair_index++);
          for (std::uint64_t q = 0; q < hw; ++q) {
            QueryMask& qm = qmasks[i][q];
            if (pm[q].epipole_full) {
              for (std::uint64_t t = 0; t < hw; ++t)
                qm.push_back({static_cast<std::int32_t>(s),
                              static_cast<std::int32_t>(t)});
            } else {
              for (const EpipolarMask::Candidate& c : pm[q].candidates)
                qm.push_back({static_cast<std::int32_t>(s),
                              c.row * spec.grid.width + c.col});
            }
          }
        }
        for (std::uint64_t q = 0; q < hw; ++q)
          max_context = std::max<std::uint64_t>(max_context, qmasks[i][q].size());
      }
      row.peak_score_buffer = max_context;

      std::vector<double> times;
      AttentionStats stats;
      for (int rep = 0; rep < spec.repetitions; ++rep) {
        AttentionStats rep_stats;
        double t0 = now_seconds();
        for (int i = 0; i < n; ++i)
          if (!schedule[i].empty())
            masked_attention(features[i], kv[i], qmasks[i], params,
                             &rep_stats);
        times.push_back(now_seconds() - t0);
        stats = rep_stats;
      }
      row.score_evaluations = stats.score_evaluations;
      row.median_seconds = times.empty() ? 0.0 : median(times);
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
  out << "# panoepi bench v1\n";
  out << "frames,strategy,frame_pairs,score_evaluations,peak_score_buffer,"
         "median_seconds,capped\n";
  char buf[64];
  for (const BenchRow& r : result.rows) {
    if (std::isnan(r.median_seconds))
      std::snprintf(buf, sizeof(buf), "nan");
    else
      std::snprintf(buf, sizeof(buf), "%.9f", r.median_seconds);
    out << r.frames << "," << r.strategy << "," << r.frame_pairs << ","
        << r.score_evaluations << "," << r.peak_score_buffer << "," << buf
        << "," << (r.capped ? 1 : 0) << "\n";
  }
}

void write_bench_csv(const std::filesystem::path& path,
                     const BenchResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_bench_csv(out, result);
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace panoepi
