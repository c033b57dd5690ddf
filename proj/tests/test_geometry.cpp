#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "radalign/geometry.hpp"

using namespace radalign;

namespace {

void expect_transform_near(const Transform2& a, const Transform2& b, double tol) {
  EXPECT_NEAR(a.dx, b.dx, tol);
  EXPECT_NEAR(a.dy, b.dy, tol);
  EXPECT_NEAR(normalize_angle(a.dtheta - b.dtheta), 0.0, tol);
}

Transform2 random_transform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-100.0, 100.0), a(-kPi, kPi);
  return {t(rng), t(rng), a(rng)};
}

Trajectory line_trajectory(int n, double speed, double heading) {
  std::vector<TimedPose> s;
  for (int i = 0; i < n; ++i) {
    const double t = i * 0.5;
    s.push_back({t, {speed * t * std::cos(heading), speed * t * std::sin(heading), heading, 0.5, 0.01}});
  }
  return {"line", s};
}

}  // namespace

TEST(Angle, NormalizeIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(normalize_angle(10 * kTwoPi + 0.25), 0.25, 1e-12);
}

TEST(Compose, IdentityWithIdentity) {
  EXPECT_EQ(compose(Transform2::identity(), Transform2::identity()), Transform2::identity());
}

TEST(Compose, QuarterTurnThenStep) {
  const Transform2 r = compose({1, 0, kPi / 2}, {1, 0, 0});
  expect_transform_near(r, {1, 1, kPi / 2}, 1e-15);
}

TEST(Compose, AppliesRightOperandFirst) {
  const Transform2 a{2, -1, 0.3}, b{0.5, 4, -1.1};
  const Vec2 p{1.5, -0.25};
  const Vec2 lhs = compose(a, b).apply(p);
  const Vec2 rhs = a.apply(b.apply(p));
  EXPECT_NEAR(lhs.x, rhs.x, 1e-12);
  EXPECT_NEAR(lhs.y, rhs.y, 1e-12);
}

TEST(Compose, GroupPropertiesOverRandomTransforms) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Transform2 a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    expect_transform_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-12);
    expect_transform_near(compose(a, inverse(a)), Transform2::identity(), 1e-12);
    expect_transform_near(compose(inverse(a), a), Transform2::identity(), 1e-12);
  }
}

TEST(RelativeTransform, SamePoseIsIdentity) {
  const Pose2 a{3, -2, 1.2};
  expect_transform_near(relative_transform(a, a), Transform2::identity(), 0.0);
}

TEST(RelativeTransform, AxisAlignedTranslation) {
  expect_transform_near(relative_transform({0, 0, 0}, {3, 4, 0}), {3, 4, 0}, 1e-15);
}

TEST(RelativeTransform, RotatedFrame) {
  // b sits one meter ahead along a's heading (+y in the world).
  expect_transform_near(relative_transform({0, 0, kPi / 2}, {0, 1, kPi / 2}), {1, 0, 0}, 1e-15);
}

TEST(RelativeTransform, ReapplyRoundTrips) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> t(-500.0, 500.0), a(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 pa{t(rng), t(rng), a(rng)}, pb{t(rng), t(rng), a(rng)};
    const Pose2 back = apply(pa, relative_transform(pa, pb));
    EXPECT_NEAR(back.x, pb.x, 1e-12);
    EXPECT_NEAR(back.y, pb.y, 1e-12);
    EXPECT_NEAR(normalize_angle(back.theta - pb.theta), 0.0, 1e-12);
  }
}

TEST(WorldEgo, HalfTurn) {
  const Vec2 w = to_world({10, 0, kPi}, {1, 0});
  EXPECT_NEAR(w.x, 9.0, 1e-12);
  EXPECT_NEAR(w.y, 0.0, 1e-12);
  const Vec2 e = to_ego({10, 0, kPi}, w);
  EXPECT_NEAR(e.x, 1.0, 1e-12);
  EXPECT_NEAR(e.y, 0.0, 1e-12);
}

TEST(Trajectory, RejectsNonIncreasingTimestamps) {
  EXPECT_THROW(Trajectory("bad", {{0.0, {}}, {0.0, {}}}), InputError);
}

TEST(Interpolate, Errors) {
  EXPECT_THROW(interpolate_pose(Trajectory("one", {{0.0, {}}}), 0.0), DegenerateTrajectoryError);
  EXPECT_THROW(interpolate_pose(Trajectory(), 0.0), DegenerateTrajectoryError);
  const Trajectory tr = line_trajectory(3, 10, 0);
  EXPECT_THROW(interpolate_pose(tr, -0.01), RangeError);
  EXPECT_THROW(interpolate_pose(tr, 1.01), RangeError);
}

TEST(Interpolate, SampleTimestampGivesSample) {
  const Trajectory tr = line_trajectory(5, 20, 0.4);
  for (const auto& s : tr.samples()) {
    const Pose2 p = interpolate_pose(tr, s.t);
    EXPECT_DOUBLE_EQ(p.x, s.pose.x);
    EXPECT_DOUBLE_EQ(p.y, s.pose.y);
    EXPECT_DOUBLE_EQ(p.theta, s.pose.theta);
  }
}

TEST(Interpolate, StraightLineMidpoint) {
  const Trajectory tr = line_trajectory(2, 20, 0.4);
  const Pose2 p = interpolate_pose(tr, 0.25);
  EXPECT_NEAR(p.x, 5 * std::cos(0.4), 1e-12);
  EXPECT_NEAR(p.y, 5 * std::sin(0.4), 1e-12);
  EXPECT_NEAR(p.theta, 0.4, 1e-12);
}

TEST(Interpolate, SigmasAreLinear) {
  Trajectory tr("s", {{0.0, {0, 0, 0, 1.0, 0.1}}, {1.0, {1, 0, 0, 3.0, 0.3}}});
  const Pose2 p = interpolate_pose(tr, 0.25);
  EXPECT_NEAR(p.sigma_xy, 1.5, 1e-12);
  EXPECT_NEAR(p.sigma_theta, 0.15, 1e-12);
}

TEST(Interpolate, CircleOfRadius50) {
  const double r = 50.0, w = 0.2;
  std::vector<TimedPose> s;
  for (int i = 0; i < 4; ++i) {
    const double t = i * 1.0;
    s.push_back({t, {r * std::cos(w * t), r * std::sin(w * t), normalize_angle(w * t + kPi / 2)}});
  }
  const Trajectory tr("circle", s);
  // Central tangents on both ends of the middle interval; the outer ones use one-sided tangents.
  for (double t = 1.0; t <= 2.0; t += 0.05) {
    const Pose2 p = interpolate_pose(tr, t);
    EXPECT_LT(std::hypot(p.x - r * std::cos(w * t), p.y - r * std::sin(w * t)), 0.01) << "t=" << t;
  }
  for (double t = 0.0; t <= 3.0; t += 0.05) {
    const Pose2 p = interpolate_pose(tr, t);
    EXPECT_LT(std::hypot(p.x - r * std::cos(w * t), p.y - r * std::sin(w * t)), 0.2) << "t=" << t;
  }
}

TEST(Interpolate, HeadingCrossesWrapWithoutJump) {
  const double w = 0.3;
  std::vector<TimedPose> s;
  for (int i = 0; i < 8; ++i) {
    const double t = i;
    const double h = kPi - 1.0 + w * t;
    s.push_back({t, {std::cos(h), std::sin(h), normalize_angle(h)}});
  }
  const Trajectory tr("wrap", s);
  double prev = interpolate_pose(tr, 0.0).theta;
  for (double t = 0.01; t <= 7.0; t += 0.01) {
    const double cur = interpolate_pose(tr, t).theta;
    EXPECT_LE(std::abs(normalize_angle(cur - prev)), w) << "t=" << t;
    EXPECT_GT(cur, -kPi);
    EXPECT_LE(cur, kPi);
    prev = cur;
  }
}
