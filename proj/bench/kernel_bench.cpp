// Compares the OpenMP masked-attention kernel against the serial reference
// implementation: wall time across thread counts, max |difference| against
// the reference, and bitwise agreement between thread counts.
//
// The parallel kernel accumulates each query's value sum in candidate order
// regardless of how queries are distributed over threads, so its output must
// be bit-identical for every thread count.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "panoepi/attention.hpp"
#include "panoepi/reference.hpp"
#include "panoepi/threading.hpp"

using namespace panoepi;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch())
      .count();
}

struct Instance {
  Eigen::MatrixXd queries;
  std::vector<Eigen::MatrixXd> kv;
  std::vector<QueryMask> masks;
  AttentionParams params;
};

Instance make_instance(ref::Rng& rng, int num_queries, int frames,
                       int rows_per_frame, int channels, int candidates) {
  Instance inst;
  inst.queries = ref::random_features(rng, num_queries, channels);
  for (int f = 0; f < frames; ++f)
    inst.kv.push_back(ref::random_features(rng, rows_per_frame, channels));
  std::uniform_int_distribution<int> pick_frame(0, frames - 1);
  std::uniform_int_distribution<int> pick_row(0, rows_per_frame - 1);
  inst.masks.resize(num_queries);
  for (int q = 0; q < num_queries; ++q)
    for (int c = 0; c < candidates; ++c)
      inst.masks[q].push_back({pick_frame(rng), pick_row(rng)});
  inst.params = ref::random_attention_params(rng, channels);
  return inst;
}

}  // namespace

int main() {
  ref::Rng rng(7);
  const int num_queries = 4096;
  const int frames = 4;
  const int rows_per_frame = 2048;
  const int channels = 32;
  const int candidates = 96;
  Instance inst = make_instance(rng, num_queries, frames, rows_per_frame,
                                channels, candidates);

  // Serial reference (always single threaded, scalar loops).
  double t0 = now_seconds();
  Eigen::MatrixXd ref_out = ref::naive_masked_attention(
      inst.queries, inst.kv, inst.masks, inst.params);
  double ref_time = now_seconds() - t0;
  std::printf("%-28s %8.3f s\n", "serial reference", ref_time);

  const int hw_threads = max_threads();
  std::vector<int> counts{1};
  if (hw_threads >= 2) counts.push_back(2);
  if (hw_threads >= 4) counts.push_back(4);
  if (hw_threads > 4) counts.push_back(hw_threads);

  Eigen::MatrixXd first;
  bool bitwise_ok = true;
  double worst = 0.0;
  for (int n : counts) {
    set_max_threads(n);
    AttentionStats stats;
    double t1 = now_seconds();
    Eigen::MatrixXd out = masked_attention(inst.queries, inst.kv, inst.masks,
                                           inst.params, &stats);
    double dt = now_seconds() - t1;
    double diff = (out - ref_out).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    if (first.size() == 0) {
      first = out;
    } else if (std::memcmp(first.data(), out.data(),
                           sizeof(double) * first.size()) != 0) {
      bitwise_ok = false;
    }
    char label[64];
    std::snprintf(label, sizeof(label), "openmp kernel (%d thread%s)", n,
                  n == 1 ? "" : "s");
    std::printf("%-28s %8.3f s   speedup %5.2fx   max|diff| %.3e\n", label, dt,
                ref_time / dt, diff);
  }

  std::printf("max |kernel - reference| = %.3e\n", worst);
  std::printf("bitwise identical across thread counts: %s\n",
              bitwise_ok ? "yes" : "NO");
  return bitwise_ok && worst < 1e-10 ? 0 : 1;
}
