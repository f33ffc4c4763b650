#include "panoepi/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace panoepi {

AttentionParams AttentionParams::identity(int channels) {
  AttentionParams p;
  p.wq = Eigen::MatrixXd::Identity(channels, channels);
  p.wk = Eigen::MatrixXd::Identity(channels, channels);
  p.wv = Eigen::MatrixXd::Identity(channels, channels);
  p.scale = channels;
  return p;
}

void AttentionParams::validate(int channels) const {
  for (const Eigen::MatrixXd* w : {&wq, &wk, &wv})
    if (w->rows() != channels || w->cols() != channels)
      throw ShapeError("attention projection must be " +
                       std::to_string(channels) + "x" +
                       std::to_string(channels) + ", got " +
                       std::to_string(w->rows()) + "x" +
                       std::to_string(w->cols()));
  if (!(scale > 0.0))
    throw DomainError("attention scale must be positive");
}

void AttentionStats::merge(const AttentionStats& o) {
  score_evaluations += o.score_evaluations;
  softmax_max = std::max(softmax_max, o.softmax_max);
  peak_score_buffer = std::max(peak_score_buffer, o.peak_score_buffer);
  empty_mask_fallbacks += o.empty_mask_fallbacks;
}

Eigen::MatrixXd masked_attention(const Eigen::MatrixXd& queries,
                                 std::span<const Eigen::MatrixXd> keys_values,
                                 std::span<const QueryMask> masks,
                                 const AttentionParams& params,
                                 AttentionStats* stats) {
  const int c = static_cast<int>(queries.cols());
  const long p = queries.rows();
  params.validate(c);
  if (static_cast<long>(masks.size()) != p)
    throw ShapeError("got " + std::to_string(masks.size()) + " masks for " +
                     std::to_string(p) + " queries");
  for (const Eigen::MatrixXd& kv : keys_values)
    if (kv.cols() != c)
      throw ShapeError("key/value channel count " + std::to_string(kv.cols()) +
                       " differs from query channel count " +
                       std::to_string(c));
  // Bounds-check every candidate up front so the parallel loop cannot throw.
  for (long q = 0; q < p; ++q)
    for (const CandidateRef& cand : masks[q]) {
      if (cand.frame < 0 || cand.frame >= static_cast<long>(keys_values.size()))
        throw DomainError("candidate frame " + std::to_string(cand.frame) +
                          " out of range for query " + std::to_string(q));
      if (cand.index < 0 || cand.index >= keys_values[cand.frame].rows())
        throw DomainError("candidate index " + std::to_string(cand.index) +
                          " out of range in frame " +
                          std::to_string(cand.frame));
    }

  const double inv_sqrt_d = 1.0 / std::sqrt(params.scale);
  Eigen::MatrixXd q_proj = queries * params.wq.transpose();
  std::vector<Eigen::MatrixXd> k_proj(keys_values.size());
  std::vector<Eigen::MatrixXd> v_proj(keys_values.size());
  for (size_t f = 0; f < keys_values.size(); ++f) {
    k_proj[f] = keys_values[f] * params.wk.transpose();
    v_proj[f] = keys_values[f] * params.wv.transpose();
  }

  Eigen::MatrixXd out(p, c);
  std::uint64_t evals = 0, fallbacks = 0, softmax_max = 0, peak = 0;

#pragma omp parallel reduction(+ : evals, fallbacks) \
    reduction(max : softmax_max, peak)
  {
    std::vector<double> scores;
#pragma omp for schedule(static)
    for (long q = 0; q < p; ++q) {
      const QueryMask& mask = masks[q];
      if (mask.empty()) {
        // Nothing visible: pass the query's own feature through wv.
        out.row(q) = queries.row(q) * params.wv.transpose();
        ++fallbacks;
        continue;
      }
      scores.resize(mask.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < mask.size(); ++i) {
        scores[i] = q_proj.row(q).dot(k_proj[mask[i].frame].row(mask[i].index)) *
                    inv_sqrt_d;
        mx = std::max(mx, scores[i]);
      }
      double denom = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        denom += s;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(c);
      for (size_t i = 0; i < mask.size(); ++i)
        acc += (scores[i] / denom) * v_proj[mask[i].frame].row(mask[i].index);
      out.row(q) = acc;
      evals += mask.size();
      softmax_max = std::max<std::uint64_t>(softmax_max, mask.size());
      peak = std::max<std::uint64_t>(peak, mask.size());
    }
  }

  if (stats) {
    stats->score_evaluations += evals;
    stats->empty_mask_fallbacks += fallbacks;
    stats->softmax_max = std::max(stats->softmax_max, softmax_max);
    stats->peak_score_buffer = std::max(stats->peak_score_buffer, peak);
  }
  return out;
}

Eigen::MatrixXd full_attention(const Eigen::MatrixXd& queries,
                               const Eigen::MatrixXd& keys_values,
                               const AttentionParams& params,
                               AttentionStats* stats) {
  const int c = static_cast<int>(queries.cols());
  params.validate(c);
  if (keys_values.cols() != c)
    throw ShapeError("key/value channel count " +
                     std::to_string(keys_values.cols()) +
                     " differs from query channel count " + std::to_string(c));
  const long p = queries.rows();
  const long pk = keys_values.rows();
  if (pk == 0) return Eigen::MatrixXd::Zero(p, c);

  const double inv_sqrt_d = 1.0 / std::sqrt(params.scale);
  Eigen::MatrixXd q_proj = queries * params.wq.transpose();
  Eigen::MatrixXd k_proj = keys_values * params.wk.transpose();
  Eigen::MatrixXd v_proj = keys_values * params.wv.transpose();

  // The dense score matrix is materialized on purpose; its size is the
  // memory cost the masked path avoids.
  Eigen::MatrixXd s = (q_proj * k_proj.transpose()) * inv_sqrt_d;
#pragma omp parallel for schedule(static)
  for (long q = 0; q < p; ++q) {
    double mx = s.row(q).maxCoeff();
    s.row(q) = (s.row(q).array() - mx).exp();
    s.row(q) /= s.row(q).sum();
  }
  Eigen::MatrixXd out = s * v_proj;

  if (stats) {
    std::uint64_t evals =
        static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(pk);
    stats->score_evaluations += evals;
    stats->softmax_max =
        std::max(stats->softmax_max, static_cast<std::uint64_t>(pk));
    stats->peak_score_buffer = std::max(stats->peak_score_buffer, evals);
  }
  return out;
}

namespace {

void check_schedule(int frames, const Schedule& schedule) {
  if (static_cast<int>(schedule.size()) != frames)
    throw ShapeError("schedule has " + std::to_string(schedule.size()) +
                     " entries for " + std::to_string(frames) + " frames");
  for (int i = 0; i < frames; ++i)
    for (int j : schedule[i]) {
      if (j < 0 || j >= frames)
        throw DomainError("schedule entry " + std::to_string(j) +
                          " out of range");
      if (j == i)
        throw DomainError("frame " + std::to_string(i) +
                          " scheduled against itself");
    }
}

CostReport dense_cost(std::uint64_t n, std::uint64_t hw, std::uint64_t c) {
  CostReport r;
  r.query_count = n * hw;
  r.key_value_count = n * hw;
  r.frame_pairs = n * (n - 1);
  r.score_evaluations = r.frame_pairs * hw * hw;
  r.softmax_total = r.score_evaluations;
  r.softmax_max = n > 1 ? (n - 1) * hw : 0;
  r.mac_estimate = r.score_evaluations * 2 * c + r.query_count * c * c +
                   r.key_value_count * 2 * c * c;
  r.peak_score_buffer = n > 1 ? hw * (n - 1) * hw : 0;
  return r;
}

}  // namespace

CostComparison cost_model(int frames, int height, int width, int channels,
                          const Schedule& schedule, std::uint64_t uniform_m) {
  check_schedule(frames, schedule);
  const std::uint64_t hw =
      static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  const std::uint64_t c = channels;

  CostComparison cmp;
  cmp.dense = dense_cost(frames, hw, c);

  CostReport& m = cmp.masked;
  std::uint64_t active_queries = 0;  // query pixels with a nonempty schedule
  std::vector<bool> is_source(frames, false);
  std::uint64_t max_context = 0;  // candidates per query, worst frame
  for (int i = 0; i < frames; ++i) {
    m.frame_pairs += schedule[i].size();
    if (!schedule[i].empty()) active_queries += hw;
    for (int j : schedule[i]) is_source[j] = true;
    max_context =
        std::max<std::uint64_t>(max_context, schedule[i].size() * uniform_m);
  }
  std::uint64_t sources = 0;
  for (bool b : is_source) sources += b ? 1 : 0;

  m.query_count = static_cast<std::uint64_t>(frames) * hw;
  m.key_value_count = sources * hw;
  m.score_evaluations = m.frame_pairs * hw * uniform_m;
  m.softmax_total = m.score_evaluations;
  m.softmax_max = max_context;
  m.peak_score_buffer = max_context;
  m.mac_estimate = m.score_evaluations * 2 * c + active_queries * c * c +
                   m.key_value_count * 2 * c * c;
  return cmp;
}

CostComparison cost_model(int frames, int height, int width, int channels,
                          const Schedule& schedule,
                          std::span<const std::uint64_t> per_pair_candidates) {
  check_schedule(frames, schedule);
  std::uint64_t pairs = 0;
  for (const auto& s : schedule) pairs += s.size();
  if (per_pair_candidates.size() != pairs)
    throw ShapeError("got " + std::to_string(per_pair_candidates.size()) +
                     " per-pair candidate totals for " + std::to_string(pairs) +
                     " scheduled pairs");

  const std::uint64_t hw =
      static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  const std::uint64_t c = channels;

  CostComparison cmp;
  cmp.dense = dense_cost(frames, hw, c);

  CostReport& m = cmp.masked;
  m.frame_pairs = pairs;
  m.query_count = static_cast<std::uint64_t>(frames) * hw;
  std::uint64_t active_queries = 0;
  std::vector<bool> is_source(frames, false);
  for (int i = 0; i < frames; ++i) {
    if (!schedule[i].empty()) active_queries += hw;
    for (int j : schedule[i]) is_source[j] = true;
  }
  std::uint64_t sources = 0;
  for (bool b : is_source) sources += b ? 1 : 0;
  m.key_value_count = sources * hw;
  for (std::uint64_t t : per_pair_candidates) m.score_evaluations += t;
  m.softmax_total = m.score_evaluations;
  // Per-query softmax sizes are not recoverable from pair totals; left 0.
  m.softmax_max = 0;
  m.peak_score_buffer = 0;
  m.mac_estimate = m.score_evaluations * 2 * c + active_queries * c * c +
                   m.key_value_count * 2 * c * c;
  return cmp;
}

}  // namespace panoepi
