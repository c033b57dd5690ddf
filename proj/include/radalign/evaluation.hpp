#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "radalign/error.hpp"
#include "radalign/geometry.hpp"
#include "radalign/occupancy.hpp"
#include "radalign/spatial_hash.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

struct MmeConfig {
  double radius = 1.0;
  int min_neighbors = 5;
  double epsilon = 1e-9;

  void validate() const {
    if (!(radius > 0)) throw ConfigError("evaluation.mme.radius must be > 0");
    if (min_neighbors < 2) throw ConfigError("evaluation.mme.min_neighbors must be >= 2");
    if (!(epsilon >= 0)) throw ConfigError("evaluation.mme.epsilon must be >= 0");
  }
};

struct MmeResult {
  double value = 0.0;
  std::size_t valid_points = 0;
  std::size_t skipped_points = 0;
};

// Mean over points of the differential entropy of the 2D sample covariance of
// all points within `radius` (the point itself included).
inline MmeResult mean_map_entropy(std::span<const Vec2> cloud, const MmeConfig& cfg = {}) {
  cfg.validate();
  if (cloud.size() < static_cast<std::size_t>(cfg.min_neighbors) + 1) {
    throw InputError("mean map entropy needs at least min_neighbors + 1 points");
  }
  const SpatialHash index(cloud, cfg.radius);
  // h = 0.5 * ln((2 pi e)^2 det) = ln(2 pi e) + 0.5 * ln det
  const double log_norm = std::log(kTwoPi * std::exp(1.0));
  MmeResult res;
  double sum = 0.0;
  std::vector<std::size_t> nbrs;
  for (const Vec2& q : cloud) {
    nbrs.clear();
    index.for_each_within(q, cfg.radius, [&](std::size_t j) { nbrs.push_back(j); });
    if (nbrs.size() < static_cast<std::size_t>(cfg.min_neighbors)) {
      ++res.skipped_points;
      continue;
    }
    const double n = static_cast<double>(nbrs.size());
    double mx = 0, my = 0;
    for (auto j : nbrs) {
      mx += cloud[j].x;
      my += cloud[j].y;
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (auto j : nbrs) {
      const double dx = cloud[j].x - mx, dy = cloud[j].y - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
    sxx /= n - 1;
    syy /= n - 1;
    sxy /= n - 1;
    const double det = (sxx + cfg.epsilon) * (syy + cfg.epsilon) - sxy * sxy;
    sum += log_norm + 0.5 * std::log(det);
    ++res.valid_points;
  }
  if (res.valid_points == 0) throw InputError("mean map entropy undefined: no point has enough neighbours");
  res.value = sum / static_cast<double>(res.valid_points);
  return res;
}

inline MmeResult mean_map_entropy(const GlobalCloud& cloud, const MmeConfig& cfg = {}) {
  return mean_map_entropy(std::span<const Vec2>(cloud.points), cfg);
}

struct PoseRmse {
  double trans = 0.0;
  double rot = 0.0;
};

inline PoseRmse pose_rmse(const std::vector<Pose2>& aligned, const std::vector<Pose2>& truth) {
  if (aligned.size() != truth.size()) throw InputError("pose_rmse: pose sets differ in size");
  if (aligned.empty()) throw InputError("pose_rmse: empty pose set");
  double st = 0, sr = 0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    st += squared_norm(aligned[i].position() - truth[i].position());
    const double d = normalize_angle(aligned[i].theta - truth[i].theta);
    sr += d * d;
  }
  const double n = static_cast<double>(aligned.size());
  return {std::sqrt(st / n), std::sqrt(sr / n)};
}

struct LateralConfig {
  double step = 1.0;
  // Arclength interval of the reference line to evaluate; negative end means
  // the whole line.
  double roi_begin = 0.0;
  double roi_end = -1.0;
  // Largest lateral distance searched on either side of the reference line.
  double max_lateral = 30.0;
  // Generated and truth crossings further apart than this are not associated.
  double association_gate = 1.0;
  // Generated crossings of one class closer than this are merged into one
  // element before association; 0 disables merging.
  double merge_gap = 0.0;

  void validate() const {
    if (!(step > 0)) throw ConfigError("evaluation.step must be > 0");
    if (!(max_lateral > 0)) throw ConfigError("evaluation.max_lateral must be > 0");
    if (!(association_gate > 0)) throw ConfigError("evaluation.association_gate must be > 0");
    if (!(merge_gap >= 0)) throw ConfigError("evaluation.merge_gap must be >= 0");
  }
};

struct LateralStep {
  double s = 0.0;
  std::size_t associations = 0;
  double offset = 0.0;
  double non_offset = 0.0;
};

struct LateralSummary {
  double offset_error = 0.0;      // mean over steps of the signed per-step offset
  double abs_offset_error = 0.0;  // mean over steps of its magnitude
  double non_offset_error = 0.0;
  std::size_t steps_used = 0;
};

inline constexpr std::array<LaneClass, 3> kLaneClasses = {LaneClass::solid, LaneClass::dashed, LaneClass::boundary};

struct LateralErrorReport {
  std::array<LateralSummary, 3> per_class;  // indexed like kLaneClasses
  LateralSummary overall;
  std::vector<LateralStep> series;                        // overall, one entry per step
  std::array<std::vector<LateralStep>, 3> class_series;  // per class, one entry per step
  std::size_t empty_steps = 0;
};

namespace detail {

struct Station {
  Vec2 point;
  Vec2 normal;  // unit, pointing left of the line direction
};

inline double polyline_length(const std::vector<Vec2>& pts) {
  double len = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += norm(pts[i] - pts[i - 1]);
  return len;
}

inline Station station_at(const std::vector<Vec2>& pts, double s) {
  double acc = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - pts[i - 1];
    const double len = norm(d);
    if (len == 0) continue;
    if (s <= acc + len || i + 1 == pts.size()) {
      const double u = std::clamp((s - acc) / len, 0.0, 1.0);
      const Vec2 dir = (1.0 / len) * d;
      return {pts[i - 1] + u * d, {-dir.y, dir.x}};
    }
    acc += len;
  }
  throw InputError("reference line is degenerate");
}

// Lateral coordinates where the polyline crosses the line through st along
// its normal, within +-max_lateral.
inline void crossings(const Polyline& pl, const Station& st, double max_lateral, std::vector<double>& out) {
  const Vec2 tangent{st.normal.y, -st.normal.x};
  for (std::size_t i = 1; i < pl.pts.size(); ++i) {
    const Vec2 a = pl.pts[i - 1] - st.point, b = pl.pts[i] - st.point;
    const double ta = dot(a, tangent), tb = dot(b, tangent);
    if ((ta > 0 && tb > 0) || (ta < 0 && tb < 0)) continue;
    double u;
    if (ta == tb) {
      if (ta != 0) continue;
      u = dot(a, st.normal);  // segment lies on the cast line; take its first end
    } else {
      const double w = ta / (ta - tb);
      u = dot(a + w * (b - a), st.normal);
    }
    // A vertex exactly on the line is reported by both adjacent segments.
    if (tb == 0 && i + 1 < pl.pts.size()) continue;
    if (std::abs(u) <= max_lateral) out.push_back(u);
  }
}

inline std::vector<double> merge_close(std::vector<double> v, double gap) {
  std::sort(v.begin(), v.end());
  if (gap <= 0 || v.empty()) return v;
  std::vector<double> out;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i + 1;
    double sum = v[i];
    while (j < v.size() && v[j] - v[j - 1] <= gap) sum += v[j++];
    out.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return out;
}

// Greedy one-to-one association by smallest lateral distance; returns
// generated - truth for each associated pair.
inline std::vector<double> associate(const std::vector<double>& gen, const std::vector<double>& truth, double gate) {
  struct Cand {
    double dist;
    std::size_t g, t;
  };
  std::vector<Cand> cands;
  for (std::size_t g = 0; g < gen.size(); ++g) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double d = std::abs(gen[g] - truth[t]);
      if (d <= gate) cands.push_back({d, g, t});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.dist, a.g, a.t) < std::tie(b.dist, b.g, b.t);
  });
  std::vector<bool> gu(gen.size(), false), tu(truth.size(), false);
  std::vector<double> diffs;
  for (const auto& c : cands) {
    if (gu[c.g] || tu[c.t]) continue;
    gu[c.g] = tu[c.t] = true;
    diffs.push_back(gen[c.g] - truth[c.t]);
  }
  return diffs;
}

inline std::size_t class_slot(LaneClass c) {
  return static_cast<std::size_t>(std::find(kLaneClasses.begin(), kLaneClasses.end(), c) - kLaneClasses.begin());
}

}  // namespace detail

// Offset / non-offset errors between generated and truth polylines sampled
// along lines cast perpendicular to the reference line every `step` meters.
// Per step, offset is the mean signed difference over all associated pairs
// and non-offset the mean absolute deviation from it. A class's per-step
// offset averages its own pairs; its non-offset is taken against the
// all-class offset of that step.
inline LateralErrorReport lateral_errors(const std::vector<Polyline>& generated, const std::vector<Polyline>& truth,
                                         const Polyline& reference_line, const LateralConfig& cfg = {}) {
  cfg.validate();
  if (reference_line.pts.size() < 2) throw InputError("reference line needs at least 2 points");
  const double length = detail::polyline_length(reference_line.pts);
  const double s0 = std::max(0.0, cfg.roi_begin);
  const double s1 = cfg.roi_end < 0 ? length : std::min(length, cfg.roi_end);
  if (!(s1 >= s0)) throw InputError("lateral ROI is empty");

  LateralErrorReport rep;
  std::array<double, 3> off_sum{}, abs_sum{}, non_sum{};
  double o_sum = 0, oa_sum = 0, n_sum = 0;
  const auto steps = static_cast<std::size_t>(std::floor((s1 - s0) / cfg.step + 1e-9)) + 1;
  for (std::size_t k = 0; k < steps; ++k) {
    const double s = s0 + static_cast<double>(k) * cfg.step;
    const auto st = detail::station_at(reference_line.pts, s);
    std::array<std::vector<double>, 3> diffs;
    std::vector<double> all;
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> g, t;
      for (const auto& pl : generated) {
        if (pl.cls == kLaneClasses[c]) detail::crossings(pl, st, cfg.max_lateral, g);
      }
      for (const auto& pl : truth) {
        if (pl.cls == kLaneClasses[c]) detail::crossings(pl, st, cfg.max_lateral, t);
      }
      diffs[c] = detail::associate(detail::merge_close(std::move(g), cfg.merge_gap), detail::merge_close(std::move(t), 0.0),
                                   cfg.association_gate);
      all.insert(all.end(), diffs[c].begin(), diffs[c].end());
    }
    LateralStep step{s, all.size(), 0.0, 0.0};
    if (all.empty()) {
      ++rep.empty_steps;
    } else {
      for (double d : all) step.offset += d;
      step.offset /= static_cast<double>(all.size());
      for (double d : all) step.non_offset += std::abs(d - step.offset);
      step.non_offset /= static_cast<double>(all.size());
      o_sum += step.offset;
      oa_sum += std::abs(step.offset);
      n_sum += step.non_offset;
      ++rep.overall.steps_used;
    }
    rep.series.push_back(step);
    for (std::size_t c = 0; c < 3; ++c) {
      LateralStep cs{s, diffs[c].size(), 0.0, 0.0};
      if (!diffs[c].empty()) {
        for (double d : diffs[c]) cs.offset += d;
        cs.offset /= static_cast<double>(diffs[c].size());
        for (double d : diffs[c]) cs.non_offset += std::abs(d - step.offset);
        cs.non_offset /= static_cast<double>(diffs[c].size());
        off_sum[c] += cs.offset;
        abs_sum[c] += std::abs(cs.offset);
        non_sum[c] += cs.non_offset;
        ++rep.per_class[c].steps_used;
      }
      rep.class_series[c].push_back(cs);
    }
  }
  if (rep.overall.steps_used == 0) throw InputError("lateral errors undefined: no associations in the ROI");
  const double n = static_cast<double>(rep.overall.steps_used);
  rep.overall.offset_error = o_sum / n;
  rep.overall.abs_offset_error = oa_sum / n;
  rep.overall.non_offset_error = n_sum / n;
  for (std::size_t c = 0; c < 3; ++c) {
    if (rep.per_class[c].steps_used == 0) continue;
    const double m = static_cast<double>(rep.per_class[c].steps_used);
    rep.per_class[c].offset_error = off_sum[c] / m;
    rep.per_class[c].abs_offset_error = abs_sum[c] / m;
    rep.per_class[c].non_offset_error = non_sum[c] / m;
  }
  return rep;
}

// Detection polylines of every pose placed in the world by `poses` (dataset order).
inline std::vector<Polyline> world_detections(const FleetDataset& ds, const std::vector<Pose2>& poses) {
  if (poses.size() != ds.pose_count()) throw InputError("world_detections: pose count does not match the dataset");
  std::vector<Polyline> out;
  std::size_t k = 0;
  for (const auto& d : ds.drives) {
    for (const auto& r : d.records) {
      for (const auto& det : r.detections) {
        Polyline w{det.cls, {}};
        for (const Vec2& p : det.pts) w.pts.push_back(to_world(poses[k], p));
        out.push_back(std::move(w));
      }
      ++k;
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const LateralSummary& s) {
  return {{"offset", s.offset_error},
          {"abs_offset", s.abs_offset_error},
          {"non_offset", s.non_offset_error},
          {"steps", s.steps_used}};
}

inline nlohmann::ordered_json to_json(const LateralErrorReport& r) {
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < 3; ++c) per_class[std::string(to_string(kLaneClasses[c]))] = to_json(r.per_class[c]);
  nlohmann::ordered_json series = nlohmann::ordered_json::array();
  for (const auto& st : r.series) {
    series.push_back({{"s", st.s}, {"offset", st.offset}, {"non_offset", st.non_offset}, {"associations", st.associations}});
  }
  return {{"per_class", std::move(per_class)},
          {"overall", to_json(r.overall)},
          {"empty_steps", r.empty_steps},
          {"series", std::move(series)}};
}

}  // namespace radalign
