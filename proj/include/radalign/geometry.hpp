#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "radalign/error.hpp"

namespace radalign {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double squared_norm(Vec2 a) { return a.x * a.x + a.y * a.y; }

inline Vec2 rotate(Vec2 p, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

// Planar vehicle pose with the GNSS standard deviations that came with it.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double sigma_xy = 0.0;
  double sigma_theta = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

// Rigid SE(2) transform. compose(a, b) applies b first, then a.
struct Transform2 {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  static Transform2 identity() { return {}; }
  static Transform2 from_pose(const Pose2& p) { return {p.x, p.y, normalize_angle(p.theta)}; }

  Vec2 translation() const { return {dx, dy}; }
  Vec2 apply(Vec2 p) const {
    const Vec2 r = rotate(p, dtheta);
    return {r.x + dx, r.y + dy};
  }
  friend bool operator==(const Transform2&, const Transform2&) = default;
};

inline Transform2 compose(const Transform2& a, const Transform2& b) {
  const Vec2 t = rotate(b.translation(), a.dtheta);
  return {a.dx + t.x, a.dy + t.y, normalize_angle(a.dtheta + b.dtheta)};
}

inline Transform2 inverse(const Transform2& t) {
  const Vec2 r = rotate(t.translation(), -t.dtheta);
  return {-r.x, -r.y, normalize_angle(-t.dtheta)};
}

// b expressed in the frame of a.
inline Transform2 relative_transform(const Pose2& a, const Pose2& b) {
  const Vec2 d = rotate(Vec2{b.x - a.x, b.y - a.y}, -a.theta);
  return {d.x, d.y, normalize_angle(b.theta - a.theta)};
}

// The pose reached by moving from a along t. Sigmas are carried over from a.
inline Pose2 apply(const Pose2& a, const Transform2& t) {
  const Transform2 r = compose(Transform2::from_pose(a), t);
  return {r.dx, r.dy, r.dtheta, a.sigma_xy, a.sigma_theta};
}

inline Vec2 to_world(const Pose2& pose, Vec2 ego) {
  return Transform2::from_pose(pose).apply(ego);
}

inline Vec2 to_ego(const Pose2& pose, Vec2 world) {
  return rotate(world - pose.position(), -pose.theta);
}

struct TimedPose {
  double t = 0.0;
  Pose2 pose;
  friend bool operator==(const TimedPose&, const TimedPose&) = default;
};

// Time-ordered pose stream of one drive.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::string drive_id, std::vector<TimedPose> samples)
      : drive_id_(std::move(drive_id)), samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (!(samples_[i].t > samples_[i - 1].t)) {
        throw InputError("trajectory '" + drive_id_ + "': timestamps not strictly increasing at sample " +
                         std::to_string(i));
      }
    }
  }

  const std::string& drive_id() const noexcept { return drive_id_; }
  std::span<const TimedPose> samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const TimedPose& operator[](std::size_t i) const { return samples_[i]; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::string drive_id_;
  std::vector<TimedPose> samples_;
};

namespace detail {

// Cubic Hermite basis on [t0, t1] with endpoint values and slopes.
inline double hermite(double p0, double m0, double p1, double m1, double u, double h) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * h * m0 + (-2 * u3 + 3 * u2) * p1 +
         (u3 - u2) * h * m1;
}

// Catmull-Rom slope at sample k given values v (already unwrapped where needed).
template <class Value>
double slope_at(std::span<const TimedPose> s, std::size_t k, Value&& v) {
  const std::size_t n = s.size();
  if (k == 0) return (v(1) - v(0)) / (s[1].t - s[0].t);
  if (k == n - 1) return (v(n - 1) - v(n - 2)) / (s[n - 1].t - s[n - 2].t);
  return (v(k + 1) - v(k - 1)) / (s[k + 1].t - s[k - 1].t);
}

}  // namespace detail

// Cubic Hermite interpolation of position and heading; sigmas are linear.
inline Pose2 interpolate_pose(const Trajectory& traj, double t) {
  const auto s = traj.samples();
  if (s.size() < 2) {
    throw DegenerateTrajectoryError("trajectory '" + traj.drive_id() + "' needs at least 2 samples");
  }
  if (!(t >= s.front().t && t <= s.back().t)) {
    throw RangeError("t=" + std::to_string(t) + " outside trajectory '" + traj.drive_id() + "' span");
  }
  auto it = std::upper_bound(s.begin(), s.end(), t, [](double v, const TimedPose& p) { return v < p.t; });
  std::size_t k = static_cast<std::size_t>(it - s.begin());
  k = (k == 0) ? 0 : k - 1;
  if (s[k].t == t) return s[k].pose;
  if (k + 1 >= s.size()) return s.back().pose;

  const double h = s[k + 1].t - s[k].t;
  const double u = (t - s[k].t) / h;

  auto px = [&](std::size_t i) { return s[i].pose.x; };
  auto py = [&](std::size_t i) { return s[i].pose.y; };
  // Heading unwrapped locally around sample k so no global drift accumulates.
  const double base = s[k].pose.theta;
  auto unwrapped = [&](std::size_t i) {
    if (i == k) return base;
    if (i + 1 == k) return base - normalize_angle(base - s[i].pose.theta);
    double acc = base;
    for (std::size_t j = k + 1; j <= i; ++j) acc += normalize_angle(s[j].pose.theta - s[j - 1].pose.theta);
    return acc;
  };

  Pose2 out;
  out.x = detail::hermite(px(k), detail::slope_at(s, k, px), px(k + 1), detail::slope_at(s, k + 1, px), u, h);
  out.y = detail::hermite(py(k), detail::slope_at(s, k, py), py(k + 1), detail::slope_at(s, k + 1, py), u, h);
  out.theta = normalize_angle(detail::hermite(unwrapped(k), detail::slope_at(s, k, unwrapped), unwrapped(k + 1),
                                              detail::slope_at(s, k + 1, unwrapped), u, h));
  out.sigma_xy = (1 - u) * s[k].pose.sigma_xy + u * s[k + 1].pose.sigma_xy;
  out.sigma_theta = (1 - u) * s[k].pose.sigma_theta + u * s[k + 1].pose.sigma_theta;
  return out;
}

}  // namespace radalign
