#pragma once

// Dense vs. masked inter-view attention benchmark. For each frame count a
// random circular trajectory is generated; the dense strategy runs
// full_attention of every frame against the concatenation of all others,
// the sparse strategy runs masked_attention against the causal window with
// epipolar masks. Mask/feature construction happens outside the timed
// region; reported times cover the attention passes only.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "panoepi/camera.hpp"
#include "panoepi/sequence.hpp"

namespace panoepi {

struct BenchSpec {
  std::vector<int> frame_counts{10, 20, 30};
  EquirectGrid grid{32, 8};
  int channels = 16;
  MaskConfig mask;
  int window = 2;        // sparse schedule width
  int repetitions = 5;   // >= 3; the median is reported
  std::uint64_t seed = 42;
  // Dense runs whose score buffer would exceed this many elements are not
  // executed; the row is marked capped.
  std::uint64_t max_score_buffer = 100'000'000;
};

struct BenchRow {
  int frames = 0;
  std::string strategy;  // "dense" or "sparse"
  std::uint64_t frame_pairs = 0;         // closed-form schedule pair count
  std::uint64_t score_evaluations = 0;   // instrumented (0 when capped)
  std::uint64_t peak_score_buffer = 0;
  double median_seconds = 0.0;           // NaN when capped
  bool capped = false;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  const BenchRow* find(int frames, std::string_view strategy) const;
};

BenchResult run_bench(const BenchSpec& spec);

// CSV with a "# panoepi bench v1" tag line followed by a header row.
void write_bench_csv(std::ostream& out, const BenchResult& result);
void write_bench_csv(const std::filesystem::path& path,
                     const BenchResult& result);

}  // namespace panoepi
