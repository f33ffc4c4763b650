#pragma once

// Scaled dot-product attention over per-pixel feature vectors, in two forms:
//   - full_attention: every query row attends every key/value row (the score
//     matrix is materialized, which is what makes dense inter-view attention
//     expensive);
//   - masked_attention: each query attends only an explicit candidate list
//     (e.g. pixels selected by an epipolar mask), so cost scales with the
//     candidate count instead of the image size.
//
// Both kernels use max-subtracted softmax. Outputs are deterministic and
// independent of the OpenMP thread count: parallelism is over queries and
// each query accumulates its candidates in a fixed order.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "panoepi/error.hpp"

namespace panoepi {

// Projection weights; scale is the key dimension d used in the 1/sqrt(d)
// score scaling.
struct AttentionParams {
  Eigen::MatrixXd wq, wk, wv;  // channels x channels
  double scale = 0.0;

  static AttentionParams identity(int channels);
  void validate(int channels) const;
};

// Counters filled by instrumented kernel runs.
struct AttentionStats {
  std::uint64_t score_evaluations = 0;  // query-key dot products
  std::uint64_t softmax_max = 0;        // largest single softmax
  std::uint64_t peak_score_buffer = 0;  // largest score buffer held at once
  std::uint64_t empty_mask_fallbacks = 0;

  void merge(const AttentionStats& o);
};

// One attention candidate: row `index` of keys_values[frame].
struct CandidateRef {
  std::int32_t frame = 0;
  std::int32_t index = 0;
};

using QueryMask = std::vector<CandidateRef>;

// Frame visitation order for inter-view attention: schedule[i] lists the
// frames whose pixels frame i's queries attend.
using Schedule = std::vector<std::vector<int>>;

// queries: P x C. keys_values: one P_f x C matrix per source frame.
// masks: one candidate list per query row (empty list => the query falls
// back to wv * its own feature, counted in stats). Returns P x C.
Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& queries,
                                 std::span<const Eigen::MatrixXd> keys_values,
                                 std::span<const QueryMask> masks,
                                 const AttentionParams& params,
                                 AttentionStats* stats = nullptr);

// queries: P x C, keys_values: P' x C; every query attends every row.
Eigen::MatrixXd full_attention(const Eigen::MatrixXd& queries,
                               const Eigen::MatrixXd& keys_values,
                               const AttentionParams& params,
                               AttentionStats* stats = nullptr);

// Exact operation counts of one inter-view attention pass, closed form.
struct CostReport {
  std::uint64_t query_count = 0;       // query pixels across all frames
  std::uint64_t key_value_count = 0;   // key/value pixels projected (cached
                                       // once per frame)
  std::uint64_t frame_pairs = 0;       // (query frame, source frame) pairs
  std::uint64_t score_evaluations = 0; // sum over queries of candidates
  std::uint64_t softmax_total = 0;     // == score_evaluations
  std::uint64_t softmax_max = 0;       // largest single softmax
  std::uint64_t mac_estimate = 0;      // see cost_model() notes
  std::uint64_t peak_score_buffer = 0; // scores held at once, elements
};

struct CostComparison {
  CostReport dense;   // full attention over all ordered frame pairs (j != i)
  CostReport masked;  // masked attention over `schedule` with M candidates
                      // per query per source frame
};

// Closed-form cost of attending N frames of H x W pixels with C channels.
// Dense: every frame's H*W queries attend the other N-1 frames' pixels, so
// score evaluations total N*(N-1)*(H*W)^2. Masked: per query and scheduled
// source frame, `uniform_m` candidates. The MAC estimate counts C per score,
// C per value accumulation, and C^2 per projected row (one wq row per query,
// one wk plus one wv row per key/value pixel).
CostComparison cost_model(int frames, int height, int width, int channels,
                          const Schedule& schedule, std::uint64_t uniform_m);

// Same, but with measured per-pair candidate totals (sum over the query
// frame's pixels of the per-query candidate count), in schedule order:
// per_pair_candidates[k] belongs to the k-th (i, schedule[i][j]) pair taken
// in i-major order.
CostComparison cost_model(int frames, int height, int width, int channels,
                          const Schedule& schedule,
                          std::span<const std::uint64_t> per_pair_candidates);

}  // namespace panoepi
