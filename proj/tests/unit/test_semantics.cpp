#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "psda/error.hpp"
#include "psda/semantics.hpp"

using namespace psda;

namespace {

double direct_softmax(const SoftmaxModel& m, int label, const Vec& x) {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < m.class_count(); ++c) {
    const double e = std::exp(m.weights().row(c).dot(x) + m.biases()[c]);
    den += e;
    if (m.class_labels()[c] == label) num += e;
  }
  return num / den;
}

Vec2 rotate(const Vec2& v, double a) { return Eigen::Rotation2Dd(a) * v; }

}  // namespace

TEST_CASE("softmax evaluation") {
  SUBCASE("zero model is uniform") {
    const SoftmaxModel m(Mat::Zero(4, 2), Vec::Zero(4), {"a", "b", "c", "d"});
    for (double x : {-5.0, 0.0, 3.0}) CHECK(m.probability(2, Eigen::Vector2d(x, -x)) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("logistic at the origin") {
    const SoftmaxModel m(Mat{{1.0}, {0.0}}, Vec::Zero(2), {"one", "zero"});
    CHECK(m.probability("one", Vec::Zero(1)) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("random model agrees with the direct exponential sum") {
    Rng rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    Mat w(6, 2);
    Vec b(6);
    for (int i = 0; i < 6; ++i) {
      w(i, 0) = n(rng);
      w(i, 1) = n(rng);
      b[i] = n(rng);
    }
    const SoftmaxModel m(w, b, {"a", "b", "c"}, {0, 1, 2, 0, 1, 2});
    for (int t = 0; t < 50; ++t) {
      const Vec x = Eigen::Vector2d(3.0 * n(rng), 3.0 * n(rng));
      for (int l = 0; l < 3; ++l) CHECK(std::abs(m.probability(l, x) - direct_softmax(m, l, x)) <= 1e-12);
      CHECK(std::abs(m.label_probabilities(x).sum() - 1.0) <= 1e-12);
    }
  }
  SUBCASE("large logits do not overflow") {
    const SoftmaxModel m(Mat{{700.0}, {-700.0}}, Vec::Zero(2), {"up", "down"});
    CHECK(m.probability("up", Vec::Constant(1, 1.0)) == doctest::Approx(1.0));
    CHECK(std::isfinite(m.probability("down", Vec::Constant(1, 1.0))));
  }
  SUBCASE("unknown label") {
    const SoftmaxModel m(Mat::Zero(2, 1), Vec::Zero(2), {"a", "b"});
    CHECK_THROWS_AS(m.probability("c", Vec::Zero(1)), Error);
  }
}

TEST_CASE("range-bearing model geometry") {
  const SoftmaxModel canon = canonical_range_bearing_model();
  REQUIRE(canon.label_count() == 10);

  SUBCASE("identity pose leaves the canonical model unchanged") {
    const SoftmaxModel m = build_spatial_model(Pose(), ObservationType::kRangeBearing);
    CHECK((m.weights() - canon.weights()).norm() < 1e-15);
    CHECK((m.biases() - canon.biases()).norm() < 1e-15);
  }

  SUBCASE("quarter turn maps ahead onto left") {
    const Pose pose(Vec2(3.0, -2.0), std::numbers::pi / 2.0);
    const SoftmaxModel m = build_spatial_model(pose, ObservationType::kRangeBearing);
    for (const Vec2& p : {Vec2(3.0, 2.0), Vec2(-4.0, 1.0), Vec2(10.0, 10.0)}) {
      const Vec2 local = rotate(p - pose.position, -pose.heading);
      CHECK(m.probability("near_left", p) == doctest::Approx(canon.probability("near_left", local)).epsilon(1e-12));
    }
    // a point straight ahead of the rotated frame lies to the world's +y
    CHECK(m.probability("near_ahead", Vec2(3.0, 3.0)) == doctest::Approx(canon.probability("near_ahead", Vec2(5.0, 0.0))).epsilon(1e-12));
  }

  SUBCASE("rigid transforms of model and point together are invisible") {
    Rng rng(5);
    std::uniform_real_distribution<double> u(-20.0, 20.0), a(-std::numbers::pi, std::numbers::pi);
    for (int t = 0; t < 50; ++t) {
      const Pose pose(Vec2(u(rng), u(rng)), a(rng));
      const double turn = a(rng);
      const Vec2 shift(u(rng), u(rng));
      const Pose moved(rotate(pose.position, turn) + shift, pose.heading + turn);
      const Vec2 x(u(rng), u(rng));
      const Vec2 tx = rotate(x, turn) + shift;
      const SoftmaxModel m0 = build_spatial_model(pose, ObservationType::kRangeBearing);
      const SoftmaxModel m1 = build_spatial_model(moved, ObservationType::kRangeBearing);
      CHECK((m0.label_probabilities(x) - m1.label_probabilities(tx)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SUBCASE("each label is modal inside its nominal sector") {
    const std::vector<std::pair<std::string, Vec2>> sectors = {
        {"next_to", {0.5, 0.0}},      {"near_ahead", {5.0, 0.0}},   {"near_behind", {-5.0, 0.0}},
        {"near_left", {0.0, 5.0}},    {"near_right", {0.0, -5.0}},  {"far_ahead", {15.0, 0.0}},
        {"far_behind", {-15.0, 0.0}}, {"far_left", {0.0, 15.0}},    {"far_right", {0.0, -15.0}},
        {"none_visible", {35.0, 0.0}},
    };
    for (const auto& [name, p] : sectors) {
      Eigen::Index best = 0;
      canon.label_probabilities(p).maxCoeff(&best);
      CAPTURE(name);
      CHECK(canon.labels()[static_cast<std::size_t>(best)] == name);
    }
  }

  SUBCASE("ahead dominates behind along the heading ray") {
    for (double x = 0.1; x < 40.0; x += 0.5) {
      const Vec p = Vec2(x, 0.0);
      CHECK(canon.probability("near_ahead", p) + canon.probability("far_ahead", p) >
            canon.probability("near_behind", p) + canon.probability("far_behind", p));
    }
  }
}

TEST_CASE("in-view polygon model") {
  const Pose pose(Vec2(10.0, 10.0), 0.7);
  const SoftmaxModel m = build_spatial_model(pose, ObservationType::kInView);
  const Polygon view = SensorGeometry{}.nav_camera;
  CHECK(polygon_area(view) == doctest::Approx(15.0));
  CHECK(m.probability(labels::kInView, pose.to_world(polygon_centroid(view))) > 0.95);
  CHECK(m.probability(labels::kInView, pose.to_world(Vec2(-5.0, 0.0))) < 1e-6);
  for (double x = -10.0; x <= 10.0; x += 2.0) {
    const Vec p = Vec2(10.0 + x, 10.0 - x);
    CHECK(std::abs(m.probability(labels::kInView, p) + m.probability(labels::kNotInView, p) - 1.0) < 1e-12);
  }
}

TEST_CASE("detector likelihood") {
  const Pose rover(Vec2(20.0, 20.0), -2.1);
  const SoftmaxModel m = detector_likelihood(rover);
  const Vec2 centre = rover.to_world(polygon_centroid(SensorGeometry{}.detector));
  CHECK(m.probability(labels::kDetection, centre) >= 0.95);
  CHECK(m.probability(labels::kDetection, rover.to_world(Vec2(-20.0, 0.0))) <= 1e-6);
  CHECK(m.probability(labels::kDetection, rover.to_world(Vec2(5.0, 0.0))) <= 0.05);
  CHECK(m.probability(labels::kDetection, rover.to_world(Vec2(1.5, 3.5))) <= 0.05);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Vec p = Vec2(10.0 + 2.0 * i, 10.0 + 2.0 * j);
      CHECK(std::abs(m.probability(labels::kDetection, p) + m.probability(labels::kNoDetection, p) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("pose helpers") {
  CHECK(wrap_angle(3.0 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  const Pose p(Vec2(1.0, 2.0), 0.4);
  const Vec2 w(5.0, -3.0);
  CHECK((p.to_world(p.to_local(w)) - w).norm() < 1e-12);
  CHECK(polygon_contains(SensorGeometry{}.detector, Vec2(1.5, 0.0)));
  CHECK_FALSE(polygon_contains(SensorGeometry{}.detector, Vec2(-0.5, 0.0)));
}

TEST_CASE("candidate resolution") {
  const std::vector<TargetInfo> targets = {
      {0, Mineral::kCalcite, false}, {1, Mineral::kCalcite, false}, {2, Mineral::kPyroxene, true}, {3, Mineral::kPyroxene, true}};
  SemanticObservation obs;
  obs.mineral = Mineral::kCalcite;
  CHECK(resolve_candidates(obs, targets) == std::vector<int>{0, 1});
  auto some_found = targets;
  some_found[1].detected = true;
  CHECK(resolve_candidates(obs, some_found) == std::vector<int>{0});
  obs.mineral = Mineral::kPyroxene;
  CHECK(resolve_candidates(obs, targets).empty());
}

TEST_CASE("observation validation") {
  SemanticObservation obs;
  obs.label = "near_ahead";
  CHECK_NOTHROW(validate_observation(obs));
  obs.label = "sideways";
  CHECK_THROWS_AS(validate_observation(obs), Error);
  obs.polarity = Polarity::kNegative;
  obs.label = "near_ahead";
  CHECK_THROWS_AS(validate_observation(obs), Error);
  obs.label = std::string(labels::kNoneVisible);
  CHECK_NOTHROW(validate_observation(obs));
  obs.polarity = Polarity::kPositive;
  obs.frame = {FrameKind::kDroneFov, -1};
  obs.label = "far_left";
  CHECK_THROWS_AS(validate_observation(obs), Error);
  obs.frame = {FrameKind::kLandmark, -1};
  CHECK_THROWS_AS(validate_observation(obs), Error);
}

TEST_CASE("observation likelihood uses the landmark pose") {
  FrameContext ctx;
  ctx.rover = Pose(Vec2(5.0, 5.0), 0.0);
  ctx.landmarks = {{4, Pose(Vec2(30.0, 30.0), std::numbers::pi)}};
  SemanticObservation obs;
  obs.label = "near_ahead";
  obs.frame = {FrameKind::kLandmark, 4};
  const ObservationLikelihood lik = observation_likelihood(obs, ctx);
  CHECK(lik.model.probability(lik.label, Vec2(25.0, 30.0)) > 0.5);
  obs.frame.landmark_id = 9;
  CHECK_THROWS_AS(observation_likelihood(obs, ctx), Error);
}
