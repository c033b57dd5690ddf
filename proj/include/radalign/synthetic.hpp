#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "radalign/error.hpp"
#include "radalign/geometry.hpp"
#include "radalign/rng.hpp"

namespace radalign {

enum class LaneClass { solid, dashed, boundary };

inline std::string_view to_string(LaneClass c) {
  switch (c) {
    case LaneClass::solid: return "solid";
    case LaneClass::dashed: return "dashed";
    case LaneClass::boundary: return "boundary";
  }
  return "?";
}

inline LaneClass lane_class_from_string(std::string_view s) {
  if (s == "solid") return LaneClass::solid;
  if (s == "dashed") return LaneClass::dashed;
  if (s == "boundary") return LaneClass::boundary;
  throw InputError("unknown lane class '" + std::string(s) + "'");
}

struct Polyline {
  LaneClass cls = LaneClass::solid;
  std::vector<Vec2> pts;
  friend bool operator==(const Polyline&, const Polyline&) = default;
};

// Straight two-carriageway highway along +x starting at x = 0. The median
// guardrail runs along y = 0, forward traffic (heading 0) uses y < 0 and
// reverse traffic (heading pi) uses y > 0.
struct SceneSpec {
  double corridor_length = 1000.0;
  int lane_count = 2;
  double lane_width = 3.5;
  double guardrail_post_spacing = 2.0;
  double reflector_jitter = 0.05;
  bool ghost_reflection_enabled = false;
  // Mean spacing of irregular roadside reflectors (signs, pillars) per side; 0 disables.
  double landmark_spacing = 12.0;
  double median_gap = 1.0;
  double shoulder_width = 2.5;

  void validate() const {
    if (!(corridor_length > 0)) throw ConfigError("scene.corridor_length must be > 0");
    if (!(guardrail_post_spacing > 0)) throw ConfigError("scene.guardrail_post_spacing must be > 0");
    if (lane_count < 1) throw ConfigError("scene.lane_count must be >= 1");
    if (!(lane_width > 0)) throw ConfigError("scene.lane_width must be > 0");
    if (!(reflector_jitter >= 0)) throw ConfigError("scene.reflector_jitter must be >= 0");
    if (!(landmark_spacing >= 0)) throw ConfigError("scene.landmark_spacing must be >= 0");
    if (!(median_gap > 0)) throw ConfigError("scene.median_gap must be > 0");
    if (!(shoulder_width >= 0)) throw ConfigError("scene.shoulder_width must be >= 0");
  }

  double edge_rail_offset() const { return median_gap + lane_count * lane_width + shoulder_width + 0.5; }
  double lane_center_offset(int lane) const { return median_gap + (lane + 0.5) * lane_width; }

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

enum class Rail { median, left_edge, right_edge };

struct Post {
  Vec2 nominal;
  Vec2 pos;
  Rail rail = Rail::median;
  friend bool operator==(const Post&, const Post&) = default;
};

struct Scene {
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::vector<Post> posts;
  std::vector<Vec2> landmarks;
  std::vector<Polyline> gt_polylines;

  // Reference line for lateral evaluation.
  Polyline centerline() const { return {LaneClass::boundary, {{0.0, 0.0}, {spec.corridor_length, 0.0}}}; }

  friend bool operator==(const Scene&, const Scene&) = default;
};

inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Scene scene;
  scene.spec = spec;
  scene.seed = seed;
  Rng rng(derive_seed(seed, "scene"));

  const double edge = spec.edge_rail_offset();
  const auto n_posts = static_cast<std::size_t>(std::floor(spec.corridor_length / spec.guardrail_post_spacing + 1e-9)) + 1;
  const std::pair<Rail, double> rails[] = {{Rail::median, 0.0}, {Rail::left_edge, edge}, {Rail::right_edge, -edge}};
  for (const auto& [rail, y] : rails) {
    for (std::size_t k = 0; k < n_posts; ++k) {
      const Vec2 nominal{static_cast<double>(k) * spec.guardrail_post_spacing, y};
      const Vec2 jitter{rng.normal(spec.reflector_jitter), rng.normal(spec.reflector_jitter)};
      scene.posts.push_back({nominal, nominal + jitter, rail});
    }
  }

  if (spec.landmark_spacing > 0) {
    for (double side : {1.0, -1.0}) {
      double x = rng.exponential(spec.landmark_spacing);
      while (x < spec.corridor_length) {
        scene.landmarks.push_back({x, side * rng.uniform(edge + 1.0, edge + 8.0)});
        x += rng.exponential(spec.landmark_spacing);
      }
    }
  }

  const double L = spec.corridor_length;
  for (double side : {-1.0, 1.0}) {
    auto line = [&](LaneClass c, double offset) {
      scene.gt_polylines.push_back({c, {{0.0, side * offset}, {L, side * offset}}});
    };
    line(LaneClass::boundary, spec.median_gap * 0.5);
    line(LaneClass::solid, spec.median_gap);
    for (int k = 1; k < spec.lane_count; ++k) line(LaneClass::dashed, spec.median_gap + k * spec.lane_width);
    line(LaneClass::solid, spec.median_gap + spec.lane_count * spec.lane_width);
    line(LaneClass::boundary, spec.median_gap + spec.lane_count * spec.lane_width + spec.shoulder_width);
  }
  return scene;
}

enum class Direction { forward, reverse };

struct DriveSpec {
  std::string drive_id = "d0";
  Direction direction = Direction::forward;
  double speed_min = 22.0;
  double speed_max = 30.0;
  double pose_rate = 2.0;
  double gnss_sigma_xy = 0.7;
  double gnss_sigma_theta = deg2rad(0.3);
  double gnss_bias_walk_sigma = 0.02;
  double gnss_bias_limit = 1.5;
  double radar_range = 50.0;
  double range_sigma = 0.05;
  double bearing_sigma = deg2rad(0.2);
  double detection_probability = 0.9;
  double detection_sigma = 0.05;
  // Negative picks a lane from the drive's RNG.
  int lane = -1;
  std::uint64_t rng_seed = 1;

  void validate() const {
    const std::string p = "drive '" + drive_id + "': ";
    if (drive_id.empty()) throw ConfigError("drive_id must not be empty");
    if (!(speed_min >= 0 && speed_max <= 36.0 && speed_min <= speed_max))
      throw ConfigError(p + "speed range must lie within [0, 36] m/s");
    if (!(speed_max > 0)) throw ConfigError(p + "speed_max must be > 0");
    if (!(pose_rate > 0)) throw ConfigError(p + "pose_rate must be > 0");
    const std::pair<const char*, double> sigmas[] = {
        {"gnss_sigma_xy", gnss_sigma_xy},     {"gnss_sigma_theta", gnss_sigma_theta},
        {"gnss_bias_walk_sigma", gnss_bias_walk_sigma}, {"gnss_bias_limit", gnss_bias_limit},
        {"range_sigma", range_sigma},         {"bearing_sigma", bearing_sigma},
        {"detection_sigma", detection_sigma}};
    for (const auto& [name, v] : sigmas) {
      if (!(v >= 0)) throw ConfigError(p + name + " must be >= 0 (got " + std::to_string(v) + ")");
    }
    if (!(radar_range > 0)) throw ConfigError(p + "radar_range must be > 0");
    if (!(detection_probability > 0 && detection_probability <= 1))
      throw ConfigError(p + "detection_probability must be in (0, 1]");
  }

  friend bool operator==(const DriveSpec&, const DriveSpec&) = default;
};

struct PoseRecord {
  double t = 0.0;
  Pose2 truth;
  Pose2 noisy;
  std::vector<Vec2> scan;
  std::vector<Polyline> detections;
  friend bool operator==(const PoseRecord&, const PoseRecord&) = default;
};

struct DriveData {
  std::string drive_id;
  std::vector<PoseRecord> records;

  Trajectory truth_trajectory() const {
    std::vector<TimedPose> s;
    for (const auto& r : records) s.push_back({r.t, r.truth});
    return {drive_id, std::move(s)};
  }
  Trajectory noisy_trajectory() const {
    std::vector<TimedPose> s;
    for (const auto& r : records) s.push_back({r.t, r.noisy});
    return {drive_id, std::move(s)};
  }
  friend bool operator==(const DriveData&, const DriveData&) = default;
};

struct FleetDataset {
  Scene scene;
  std::vector<DriveData> drives;

  std::size_t pose_count() const {
    std::size_t n = 0;
    for (const auto& d : drives) n += d.records.size();
    return n;
  }
  friend bool operator==(const FleetDataset&, const FleetDataset&) = default;
};

namespace detail {

// Ground-truth path of a drive: lane centre with a gentle lateral weave.
struct DrivePath {
  double lane_y;
  double dir;  // +1 forward, -1 reverse
  double weave_amp;
  double weave_len;
  double weave_phase;

  double y(double x) const { return lane_y + weave_amp * std::sin(kTwoPi * x / weave_len + weave_phase); }
  double dydx(double x) const {
    return weave_amp * kTwoPi / weave_len * std::cos(kTwoPi * x / weave_len + weave_phase);
  }
  double heading(double x) const { return normalize_angle(std::atan2(dir * dydx(x), dir)); }
};

inline std::vector<Vec2> visible_reflectors(const Scene& scene, bool positive_side) {
  std::vector<Vec2> out;
  out.reserve(scene.posts.size() * 2 + scene.landmarks.size());
  for (const auto& p : scene.posts) out.push_back(p.pos);
  for (const auto& l : scene.landmarks) out.push_back(l);
  if (scene.spec.ghost_reflection_enabled) {
    // Multipath off the median barrier face on the observer's side.
    const double face = (positive_side ? 0.5 : -0.5);
    for (const auto& p : scene.posts) {
      if (p.rail == Rail::median) out.push_back({p.pos.x, 2.0 * face - p.pos.y});
    }
  }
  return out;
}

}  // namespace detail

// Ghost copies of the median posts as seen from one carriageway; used by
// consistency checks to tell ghost returns from real ones.
inline std::vector<Vec2> ghost_reflectors(const Scene& scene, bool positive_side) {
  std::vector<Vec2> out;
  const double face = (positive_side ? 0.5 : -0.5);
  for (const auto& p : scene.posts) {
    if (p.rail == Rail::median) out.push_back({p.pos.x, 2.0 * face - p.pos.y});
  }
  return out;
}

inline std::vector<Vec2> true_reflectors(const Scene& scene) {
  std::vector<Vec2> out;
  for (const auto& p : scene.posts) out.push_back(p.pos);
  for (const auto& l : scene.landmarks) out.push_back(l);
  return out;
}

inline DriveData simulate_drive(const Scene& scene, const DriveSpec& spec) {
  spec.validate();
  const SceneSpec& ss = scene.spec;
  Rng rng(spec.rng_seed);

  const double dir = spec.direction == Direction::forward ? 1.0 : -1.0;
  const int lane = spec.lane >= 0 ? std::min(spec.lane, ss.lane_count - 1) : rng.uniform_int(0, ss.lane_count - 1);
  detail::DrivePath path{-dir * ss.lane_center_offset(lane), dir, 0.15, 300.0, rng.uniform(0.0, kTwoPi)};

  const double speed_mid = 0.5 * (spec.speed_min + spec.speed_max);
  const double speed_amp = 0.5 * (spec.speed_max - spec.speed_min);
  const double speed_phase = rng.uniform(0.0, kTwoPi);
  const double start_margin = rng.uniform(0.0, 20.0);
  const double end_margin = rng.uniform(0.0, 20.0);

  // Kinematic truth stream at 10 Hz.
  const double dt = 0.1;
  std::vector<TimedPose> fine;
  double x = dir > 0 ? start_margin : ss.corridor_length - start_margin;
  double t = 0.0;
  auto inside = [&](double xx) {
    return xx >= end_margin * (dir < 0) && xx <= ss.corridor_length - end_margin * (dir > 0);
  };
  while (inside(x)) {
    fine.push_back({t, Pose2{x, path.y(x), path.heading(x), spec.gnss_sigma_xy, spec.gnss_sigma_theta}});
    const double v = std::max(0.5, speed_mid + speed_amp * std::sin(kTwoPi * t / 60.0 + speed_phase));
    x += dir * v * dt;
    t += dt;
  }
  DriveData drive;
  drive.drive_id = spec.drive_id;
  if (fine.size() < 2) return drive;
  const Trajectory truth_stream(spec.drive_id, std::move(fine));

  const auto reflectors = detail::visible_reflectors(scene, dir < 0);
  const double t_end = truth_stream.samples().back().t;
  const double t0 = rng.uniform(0.0, 0.1);
  double bias_x = 0.0, bias_y = 0.0;
  const double r2max = spec.radar_range * spec.radar_range;

  for (std::size_t j = 0;; ++j) {
    const double tj = t0 + static_cast<double>(j) / spec.pose_rate;
    if (tj > t_end) break;
    PoseRecord rec;
    rec.t = tj;
    rec.truth = interpolate_pose(truth_stream, tj);

    bias_x = std::clamp(bias_x + rng.normal(spec.gnss_bias_walk_sigma), -spec.gnss_bias_limit, spec.gnss_bias_limit);
    bias_y = std::clamp(bias_y + rng.normal(spec.gnss_bias_walk_sigma), -spec.gnss_bias_limit, spec.gnss_bias_limit);
    rec.noisy = rec.truth;
    rec.noisy.x += rng.normal(spec.gnss_sigma_xy) + bias_x;
    rec.noisy.y += rng.normal(spec.gnss_sigma_xy) + bias_y;
    rec.noisy.theta = normalize_angle(rec.noisy.theta + rng.normal(spec.gnss_sigma_theta));

    for (const Vec2& r : reflectors) {
      if (squared_norm(r - rec.truth.position()) > r2max) continue;
      if (!rng.bernoulli(spec.detection_probability)) continue;
      const Vec2 ego = to_ego(rec.truth, r);
      const double range = norm(ego) + rng.normal(spec.range_sigma);
      const double bearing = std::atan2(ego.y, ego.x) + rng.normal(spec.bearing_sigma);
      rec.scan.push_back({range * std::cos(bearing), range * std::sin(bearing)});
    }

    // Lane-line detections ahead of the vehicle, measured relative to the true pose.
    const double start = rng.uniform(2.0, 5.0);
    const double length = rng.uniform(4.0, 9.5);
    const int npts = rng.uniform_int(2, 5);
    for (const Polyline& gt : scene.gt_polylines) {
      const double line_y = gt.pts.front().y;
      if (std::abs(to_ego(rec.truth, {rec.truth.x, line_y}).y) > 8.0) continue;
      Polyline det{gt.cls, {}};
      for (int k = 0; k < npts; ++k) {
        const double wx = rec.truth.x + dir * (start + length * k / (npts - 1));
        if (wx < 0.0 || wx > ss.corridor_length) continue;
        Vec2 ego = to_ego(rec.truth, {wx, line_y});
        ego.y += rng.normal(spec.detection_sigma);
        det.pts.push_back(ego);
      }
      if (det.pts.size() >= 2) rec.detections.push_back(std::move(det));
    }
    drive.records.push_back(std::move(rec));
  }
  return drive;
}

// Per-drive seeds depend only on (root seed, drive spec), so drives can be
// simulated in any order or concurrently.
inline DriveSpec with_fleet_seed(DriveSpec spec, std::uint64_t root_seed) {
  spec.rng_seed = derive_seed(derive_seed(root_seed, spec.drive_id), spec.rng_seed);
  return spec;
}

inline FleetDataset generate_fleet(const SceneSpec& scene_spec, const std::vector<DriveSpec>& drives,
                                   std::uint64_t seed) {
  FleetDataset ds;
  ds.scene = generate_scene(scene_spec, seed);
  for (const auto& d : drives) ds.drives.push_back(simulate_drive(ds.scene, with_fleet_seed(d, seed)));
  return ds;
}

// Default evaluation fleet: alternating directions on both carriageways.
inline std::vector<DriveSpec> default_drive_specs(int count) {
  std::vector<DriveSpec> out;
  for (int i = 0; i < count; ++i) {
    DriveSpec d;
    d.drive_id = "d" + std::to_string(i);
    d.direction = (i % 2 == 0) ? Direction::forward : Direction::reverse;
    d.rng_seed = static_cast<std::uint64_t>(i + 1);
    out.push_back(d);
  }
  return out;
}

}  // namespace radalign
