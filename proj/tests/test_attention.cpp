#include <doctest.h>

#include <array>
#include <cstring>
#include <vector>

#include "panoepi/attention.hpp"
#include "panoepi/reference.hpp"
#include "panoepi/sequence.hpp"
#include "panoepi/threading.hpp"

using namespace panoepi;

namespace {

// Mask listing every row of frame 0 in order, for each query.
std::vector<QueryMask> all_of_frame0(long queries, long rows) {
  QueryMask full;
  for (long i = 0; i < rows; ++i)
    full.push_back({0, static_cast<std::int32_t>(i)});
  return std::vector<QueryMask>(queries, full);
}

}  // namespace

TEST_CASE("attention parameter validation") {
  AttentionParams p = AttentionParams::identity(4);
  CHECK(p.scale == 4.0);
  CHECK_NOTHROW(p.validate(4));
  CHECK_THROWS_AS(p.validate(5), ShapeError);
  p.scale = 0.0;
  CHECK_THROWS_AS(p.validate(4), DomainError);
}

TEST_CASE("full attention matches the scalar-loop reference") {
  ref::Rng rng(40);
  for (int i = 0; i < 30; ++i) {
    int c = 2 + i % 5;
    Eigen::MatrixXd q = ref::random_features(rng, 7, c);
    Eigen::MatrixXd kv = ref::random_features(rng, 11, c);
    AttentionParams params = ref::random_attention_params(rng, c);
    Eigen::MatrixXd got = full_attention(q, kv, params);
    Eigen::MatrixXd want = ref::naive_full_attention(q, kv, params);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("masked attention matches the scalar-loop reference") {
  ref::Rng rng(41);
  std::uniform_int_distribution<int> pick_rows(1, 9);
  for (int i = 0; i < 30; ++i) {
    int c = 2 + i % 4;
    Eigen::MatrixXd q = ref::random_features(rng, 8, c);
    std::vector<Eigen::MatrixXd> kv;
    for (int f = 0; f < 3; ++f)
      kv.push_back(ref::random_features(rng, pick_rows(rng), c));
    std::vector<QueryMask> masks(8);
    for (auto& m : masks) {
      int n = pick_rows(rng) - 1;  // sometimes empty
      for (int k = 0; k < n; ++k) {
        int f = static_cast<int>(ref::uniform(rng, 0.0, 3.0 - 1e-12));
        int r = static_cast<int>(
            ref::uniform(rng, 0.0, static_cast<double>(kv[f].rows()) - 1e-12));
        m.push_back({f, r});
      }
    }
    AttentionParams params = ref::random_attention_params(rng, c);
    Eigen::MatrixXd got = masked_attention(q, kv, masks, params);
    Eigen::MatrixXd want = ref::naive_masked_attention(q, kv, masks, params);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("a mask listing everything reproduces full attention") {
  ref::Rng rng(42);
  const int c = 6;
  Eigen::MatrixXd q = ref::random_features(rng, 20, c);
  Eigen::MatrixXd kv = ref::random_features(rng, 15, c);
  AttentionParams params = ref::random_attention_params(rng, c);

  std::array<Eigen::MatrixXd, 1> frames{kv};
  Eigen::MatrixXd masked =
      masked_attention(q, frames, all_of_frame0(20, 15), params);
  Eigen::MatrixXd full = full_attention(q, kv, params);
  CHECK((masked - full).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("empty masks fall back to the query's own value projection") {
  ref::Rng rng(43);
  const int c = 3;
  Eigen::MatrixXd q = ref::random_features(rng, 5, c);
  std::array<Eigen::MatrixXd, 1> frames{ref::random_features(rng, 4, c)};
  std::vector<QueryMask> masks(5);
  masks[2].push_back({0, 1});  // only query 2 sees anything

  AttentionParams params = ref::random_attention_params(rng, c);
  AttentionStats stats;
  Eigen::MatrixXd out = masked_attention(q, frames, masks, params, &stats);
  CHECK(stats.empty_mask_fallbacks == 4);
  CHECK(stats.score_evaluations == 1);
  for (long i : {0L, 1L, 3L, 4L}) {
    Eigen::RowVectorXd want = q.row(i) * params.wv.transpose();
    CHECK((out.row(i) - want).norm() == 0.0);
  }
  // The one-candidate query got exactly that value row (softmax of one).
  Eigen::RowVectorXd want2 = frames[0].row(1) * params.wv.transpose();
  CHECK((out.row(2) - want2).norm() < 1e-12);
}

TEST_CASE("candidate references are bounds-checked") {
  const int c = 2;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, c);
  std::array<Eigen::MatrixXd, 1> frames{Eigen::MatrixXd::Zero(3, c)};
  AttentionParams params = AttentionParams::identity(c);

  std::vector<QueryMask> masks(2);
  masks[0].push_back({1, 0});  // no frame 1
  CHECK_THROWS_AS(masked_attention(q, frames, masks, params), DomainError);
  masks[0] = {{0, 3}};  // row 3 of a 3-row frame
  CHECK_THROWS_AS(masked_attention(q, frames, masks, params), DomainError);
  masks[0].clear();
  masks.pop_back();  // mask count != query count
  CHECK_THROWS_AS(masked_attention(q, frames, masks, params), ShapeError);
}

TEST_CASE("instrumentation counts score work exactly") {
  ref::Rng rng(44);
  const int c = 4;
  Eigen::MatrixXd q = ref::random_features(rng, 6, c);
  std::array<Eigen::MatrixXd, 2> frames{ref::random_features(rng, 5, c),
                                        ref::random_features(rng, 7, c)};
  std::vector<QueryMask> masks(6);
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k <= i; ++k)  // query i gets i+1 candidates
      masks[i].push_back({k % 2, k / 2});

  AttentionStats stats;
  masked_attention(q, frames, masks, ref::random_attention_params(rng, c),
                   &stats);
  CHECK(stats.score_evaluations == 1 + 2 + 3 + 4 + 5 + 6);
  CHECK(stats.softmax_max == 6);
  CHECK(stats.peak_score_buffer == 6);
  CHECK(stats.empty_mask_fallbacks == 0);

  AttentionStats full_stats;
  full_attention(q, frames[1], ref::random_attention_params(rng, c),
                 &full_stats);
  CHECK(full_stats.score_evaluations == 6 * 7);
  CHECK(full_stats.softmax_max == 7);
  CHECK(full_stats.peak_score_buffer == 6 * 7);  // whole matrix held at once
}

TEST_CASE("outputs are bit-identical for any thread count") {
  ref::Rng rng(45);
  const int c = 8;
  Eigen::MatrixXd q = ref::random_features(rng, 64, c);
  std::vector<Eigen::MatrixXd> kv;
  for (int f = 0; f < 3; ++f) kv.push_back(ref::random_features(rng, 32, c));
  std::vector<QueryMask> masks(64);
  std::uniform_int_distribution<int> pick(0, 31);
  for (auto& m : masks)
    for (int k = 0; k < 17; ++k) m.push_back({k % 3, pick(rng)});
  AttentionParams params = ref::random_attention_params(rng, c);

  int before = max_threads();
  set_max_threads(1);
  Eigen::MatrixXd serial = masked_attention(q, kv, masks, params);
  Eigen::MatrixXd serial_full = full_attention(q, kv[0], params);
  set_max_threads(4);
  Eigen::MatrixXd parallel = masked_attention(q, kv, masks, params);
  Eigen::MatrixXd parallel_full = full_attention(q, kv[0], params);
  set_max_threads(before);

  CHECK(std::memcmp(serial.data(), parallel.data(),
                    sizeof(double) * serial.size()) == 0);
  CHECK(std::memcmp(serial_full.data(), parallel_full.data(),
                    sizeof(double) * serial_full.size()) == 0);
}

TEST_CASE("closed-form cost model for dense and windowed attention") {
  // 3 frames of 2x2 pixels, 1 channel, window 2.
  CostComparison cmp = cost_model(3, 2, 2, 1, sparse_schedule(3, 2), 5);
  CHECK(cmp.dense.frame_pairs == 6);          // 3 * 2 ordered pairs
  CHECK(cmp.dense.score_evaluations == 96);   // 6 * (2*2)^2
  CHECK(cmp.dense.softmax_max == 8);          // each query attends 2 frames
  CHECK(cmp.dense.peak_score_buffer == 4 * 8);
  CHECK(cmp.dense.query_count == 12);
  CHECK(cmp.dense.mac_estimate == 96 * 2 + 12 * 1 + 12 * 2);

  CHECK(cmp.masked.frame_pairs == 3);         // 1->0, 2->1, 2->0
  CHECK(cmp.masked.score_evaluations == 3 * 4 * 5);
  CHECK(cmp.masked.softmax_max == 10);        // frame 2: 2 sources * 5
  CHECK(cmp.masked.key_value_count == 8);     // frames 0 and 1 serve as keys
  CHECK(cmp.masked.query_count == 12);

  // Frame counts follow the 2N-3 law for window 2.
  for (int n : {2, 5, 10, 30}) {
    CostComparison c2 = cost_model(n, 2, 2, 1, sparse_schedule(n, 2), 5);
    CHECK(c2.masked.frame_pairs == static_cast<std::uint64_t>(2 * n - 3));
    CHECK(c2.dense.frame_pairs == static_cast<std::uint64_t>(n) * (n - 1));
  }

  // Measured per-pair totals are summed as-is.
  std::array<std::uint64_t, 3> totals{7, 9, 20};
  CostComparison c3 = cost_model(3, 2, 2, 1, sparse_schedule(3, 2), totals);
  CHECK(c3.masked.score_evaluations == 36);
  std::array<std::uint64_t, 2> short_totals{7, 9};
  CHECK_THROWS_AS(cost_model(3, 2, 2, 1, sparse_schedule(3, 2), short_totals),
                  ShapeError);

  Schedule self{{0}};
  CHECK_THROWS_AS(cost_model(1, 2, 2, 1, self, 5), DomainError);
}
