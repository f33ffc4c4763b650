#include <doctest.h>

#include <cmath>

#include "panoepi/ray_attention.hpp"
#include "panoepi/reference.hpp"

using namespace panoepi;

namespace {

// Volume big enough that all test rays stay inside.
Triplane test_volume(ref::Rng& rng, int channels) {
  return ref::random_triplane(rng, 16, 16, channels,
                              {-150.0, 150.0, -150.0, 150.0, -150.0, 150.0});
}

}  // namespace

TEST_CASE("ray depths are evenly spaced and inclusive") {
  RaySampleConfig cfg{5, 1, 1.0, 9.0};
  Eigen::VectorXd r = sample_depths(cfg);
  REQUIRE(r.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(r[k] == 1.0 + 2.0 * k);

  CHECK(sample_depths({1, 1, 3.0, 9.0})[0] == 3.0);
  Eigen::VectorXd two = sample_depths({2, 1, 3.0, 9.0});
  CHECK(two[0] == 3.0);
  CHECK(two[1] == 9.0);

  CHECK_THROWS_AS(sample_depths({0, 1, 1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(sample_depths({4, 0, 1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(sample_depths({4, 1, 2.0, 1.0}), DomainError);
  CHECK_THROWS_AS(sample_depths({4, 1, 0.0, 2.0}), DomainError);
  CHECK_THROWS_AS(sample_depths({4, 1, -1.0, 2.0}), DomainError);
}

TEST_CASE("ray points march along the pixel direction in world space") {
  EquirectGrid grid(512, 128);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({2.0, 3.0, 1.6}, kPi / 2));
  RaySampleConfig cfg{3, 1, 10.0, 30.0};
  // The view center looks along camera +X = world +Y after the quarter turn.
  auto pts = sample_ray_points({256.0, 64.0}, cam, grid, cfg);
  REQUIRE(pts.size() == 3);
  for (int k = 0; k < 3; ++k) {
    double r = 10.0 * (k + 1);
    CHECK(std::abs(pts[k].x() - 2.0) < 1e-12);
    CHECK(pts[k].y() == doctest::Approx(3.0 + r).epsilon(1e-14));
    CHECK(pts[k].z() == 1.6);
  }
}

TEST_CASE("attention weights are a per-head softmax") {
  ref::Rng rng(30);
  for (int i = 0; i < 50; ++i) {
    RaySampleConfig cfg{6, 3, 1.0, 50.0};
    RayAttentionParams p = ref::random_ray_params(rng, cfg, 4, 0.5);
    Eigen::MatrixXd a = p.attention_weights();
    REQUIRE(a.rows() == 6);
    REQUIRE(a.cols() == 3);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(a.col(j).sum() - 1.0) < 1e-12);
      CHECK(a.col(j).minCoeff() > 0.0);
    }
  }
  // Uniform logits give uniform weights; a dominant logit takes the mass.
  RaySampleConfig cfg{4, 1, 1.0, 2.0};
  RayAttentionParams p = RayAttentionParams::zero_init(cfg);
  CHECK(p.attention_weights()(2, 0) == 0.25);
  p.logits(1, 0) = 60.0;
  CHECK(p.attention_weights()(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parameter shapes are validated") {
  RaySampleConfig cfg{4, 2, 1.0, 10.0};
  RayAttentionParams p = RayAttentionParams::zero_init(cfg);
  CHECK_NOTHROW(p.validate(cfg, 3));
  RayAttentionParams bad = p;
  bad.logits.resize(3, 2);
  CHECK_THROWS_AS(bad.validate(cfg, 3), ShapeError);
  bad = p;
  bad.offsets.resize(4, 3);
  CHECK_THROWS_AS(bad.validate(cfg, 3), ShapeError);
  bad = p;
  bad.per_channel = true;  // head_weights stay 2x1, but 2x3 is required now
  CHECK_THROWS_AS(bad.validate(cfg, 3), ShapeError);
  bad = p;
  bad.logits(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(cfg, 3), DomainError);
}

TEST_CASE("zero-initialized single-sample attention is a plain lookup") {
  ref::Rng rng(31);
  Triplane tp = test_volume(rng, 5);
  EquirectGrid grid(128, 32);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({1.0, -2.0, 2.0}, 0.3));
  RaySampleConfig cfg{1, 1, 25.0, 30.0};
  Eigen::VectorXd got = ray_pixel_attention(
      tp, cam, {20.5, 10.5}, grid, cfg, RayAttentionParams::zero_init(cfg));
  Eigen::Vector3d p = sample_ray_points({20.5, 10.5}, cam, grid, cfg)[0];
  CHECK((got - sample_3d(tp, p)).norm() < 1e-14);
}

TEST_CASE("fast ray attention agrees with the scalar-loop reference") {
  ref::Rng rng(32);
  EquirectGrid grid(128, 32);
  for (int i = 0; i < 60; ++i) {
    int channels = 1 + static_cast<int>(ref::uniform(rng, 0.0, 4.0));
    Triplane tp = test_volume(rng, channels);
    RaySampleConfig cfg{1 + static_cast<int>(ref::uniform(rng, 0.0, 6.0)),
                        1 + static_cast<int>(ref::uniform(rng, 0.0, 3.0)),
                        2.0, 90.0};
    bool per_channel = i % 3 == 0;
    bool along_ray = i % 2 == 0;
    RayAttentionParams params = ref::random_ray_params(
        rng, cfg, channels, 1.0, per_channel, along_ray);
    PoseSE3 cam = pose4dof_to_se3(ref::random_pose4dof(
        rng, GroundExtent{-20, 20, -20, 20}, 1.0, 3.0));
    Eigen::Vector2d pixel(ref::uniform(rng, 0.0, 128.0 - 1e-9),
                          ref::uniform(rng, 0.0, 32.0));
    Eigen::VectorXd fast =
        ray_pixel_attention(tp, cam, pixel, grid, cfg, params);
    Eigen::VectorXd slow =
        ref::naive_ray_attention(tp, cam, pixel, grid, cfg, params);
    CHECK((fast - slow).norm() < 1e-12 * (1.0 + slow.norm()));
  }
}

TEST_CASE("traces expose the blended feature's ingredients") {
  ref::Rng rng(33);
  Triplane tp = test_volume(rng, 3);
  EquirectGrid grid(128, 32);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({0.0, 0.0, 1.6}, 0.0));
  RaySampleConfig cfg{4, 2, 5.0, 65.0};
  RayAttentionParams params =
      ref::random_ray_params(rng, cfg, 3, 1.0, false, true);

  RayTrace t = trace_ray_pixel_attention(tp, cam, {64.0, 16.0}, grid, cfg,
                                         params);
  REQUIRE(t.points.size() == 4);
  REQUIRE(t.sample_points.size() == 8);
  CHECK(t.depths[0] == 5.0);
  CHECK(t.depths[3] == 65.0);
  CHECK((t.feature -
         ray_pixel_attention(tp, cam, {64.0, 16.0}, grid, cfg, params))
            .norm() == 0.0);

  // along_ray_only: every perturbed point stays on the ray line.
  Eigen::Vector3d dir = (t.points[1] - t.points[0]).normalized();
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector3d delta = t.sample_points[k * 2 + j] - t.points[k];
      CHECK((delta - delta.dot(dir) * dir).norm() < 1e-9);
    }

  // Reconstruct the output from the exposed pieces.
  Eigen::VectorXd rebuilt = Eigen::VectorXd::Zero(3);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd head = Eigen::VectorXd::Zero(3);
    for (int k = 0; k < 4; ++k)
      head += t.attention(k, j) * t.sample_features.row(k * 2 + j).transpose();
    rebuilt += params.head_weights(j, 0) * head;
  }
  CHECK((rebuilt - t.feature).norm() < 1e-12);
}

TEST_CASE("out-of-volume samples name the offending ray sample") {
  ref::Rng rng(34);
  Triplane tp = test_volume(rng, 2);
  EquirectGrid grid(128, 32);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({0.0, 0.0, 1.6}, 0.0));
  RaySampleConfig cfg{3, 1, 100.0, 400.0};  // r = 250, 400 leave the volume
  try {
    ray_pixel_attention(tp, cam, {64.0, 16.0}, grid, cfg,
                        RayAttentionParams::zero_init(cfg));
    CHECK(false);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("ray sample k=1") != std::string::npos);
  }
}

TEST_CASE("logit and offset gradients match finite differences") {
  ref::Rng rng(35);
  EquirectGrid grid(128, 32);
  const int channels = 2;
  Triplane tp = test_volume(rng, channels);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({1.0, 2.0, 1.7}, 0.4));
  RaySampleConfig cfg{3, 2, 7.0, 83.0};
  Eigen::Vector2d pixel(33.7, 11.2);

  for (bool along_ray : {false, true}) {
    RayAttentionParams params =
        ref::random_ray_params(rng, cfg, channels, 0.3, false, along_ray);
    Eigen::VectorXd gbar(channels);
    for (int c = 0; c < channels; ++c) gbar[c] = ref::uniform(rng, -1.0, 1.0);

    auto loss = [&](const RayAttentionParams& p) {
      return gbar.dot(ray_pixel_attention(tp, cam, pixel, grid, cfg, p));
    };
    RayAttentionGrads g =
        ray_attention_grad(tp, cam, pixel, grid, cfg, params, gbar);
    CHECK(g.boundary_samples == 0);

    const double h = 1e-5;
    for (int k = 0; k < cfg.samples; ++k)
      for (int j = 0; j < cfg.heads; ++j) {
        double fd = ref::central_diff(
            [&](double x) {
              RayAttentionParams p = params;
              p.logits(k, j) = x;
              return loss(p);
            },
            params.logits(k, j), h);
        CHECK(g.logit_grads(k, j) ==
              doctest::Approx(fd).epsilon(1e-5).scale(1.0));
        for (int axis = 0; axis < 3; ++axis) {
          int row = k * cfg.heads + j;
          double fdo = ref::central_diff(
              [&](double x) {
                RayAttentionParams p = params;
                p.offsets(row, axis) = x;
                return loss(p);
              },
              params.offsets(row, axis), h);
          CHECK(g.offset_grads(row, axis) ==
                doctest::Approx(fdo).epsilon(1e-5).scale(1.0));
        }
      }

    if (along_ray) {
      // Gradients live in the along-ray subspace too.
      Eigen::Vector3d dir =
          cam.rotation * pixel_to_angles(33.7, 11.2, grid).dir;
      for (int r = 0; r < g.offset_grads.rows(); ++r) {
        Eigen::Vector3d go = g.offset_grads.row(r).transpose();
        CHECK((go - go.dot(dir) * dir).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("a small refine step decreases the loss") {
  ref::Rng rng(36);
  EquirectGrid grid(128, 32);
  Triplane tp = test_volume(rng, 3);
  PoseSE3 cam = pose4dof_to_se3(Pose4DoF({-3.0, 1.0, 1.6}, -0.8));
  RaySampleConfig cfg{4, 2, 6.0, 72.0};
  Eigen::Vector2d pixel(90.3, 14.6);
  RayAttentionParams params = ref::random_ray_params(rng, cfg, 3, 0.4);
  Eigen::VectorXd gbar(3);
  for (int c = 0; c < 3; ++c) gbar[c] = ref::uniform(rng, -1.0, 1.0);

  auto loss = [&](const RayAttentionParams& p) {
    return gbar.dot(ray_pixel_attention(tp, cam, pixel, grid, cfg, p));
  };
  RayAttentionGrads g =
      ray_attention_grad(tp, cam, pixel, grid, cfg, params, gbar);
  double gnorm2 = g.logit_grads.squaredNorm() + g.offset_grads.squaredNorm();
  REQUIRE(gnorm2 > 1e-10);  // otherwise the descent check is vacuous

  const double step = 1e-4;
  RayAttentionParams next = refine_step(params, g, step);
  CHECK((next.head_weights - params.head_weights).norm() == 0.0);
  double drop = loss(params) - loss(next);
  // First-order prediction: step * ||g||^2, up to curvature.
  CHECK(drop > 0.25 * step * gnorm2);

  CHECK_THROWS_AS(refine_step(params, g, 0.0), DomainError);
  CHECK_THROWS_AS(refine_step(params, g, -1.0), DomainError);
}
