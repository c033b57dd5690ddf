#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "radalign/error.hpp"
#include "radalign/geometry.hpp"
#include "radalign/spatial_hash.hpp"

namespace radalign {

struct IcpConfig {
  int max_iterations = 50;
  double tolerance = 1e-6;
  double max_correspondence_distance = 2.0;
};

struct IcpResult {
  Transform2 transform;
  bool converged = false;
  int iterations = 0;
  std::size_t correspondences = 0;
};

// Least-squares rigid transform mapping src[i] onto dst[i] (2D Procrustes).
inline Transform2 fit_rigid(std::span<const Vec2> src, std::span<const Vec2> dst) {
  const double n = static_cast<double>(src.size());
  Vec2 cs{}, cd{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs = cs + src[i];
    cd = cd + dst[i];
  }
  cs = (1.0 / n) * cs;
  cd = (1.0 / n) * cd;
  double sdot = 0.0, scross = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec2 a = src[i] - cs;
    const Vec2 b = dst[i] - cd;
    sdot += dot(a, b);
    scross += cross(a, b);
  }
  const double theta = std::atan2(scross, sdot);
  const Vec2 t = cd - rotate(cs, theta);
  return {t.x, t.y, normalize_angle(theta)};
}

// Point-to-point ICP of scan2 onto scan1. initial_guess and the result are
// pose b in the frame of pose a, as for correlate().
inline IcpResult icp_baseline(std::span<const Vec2> scan1, std::span<const Vec2> scan2,
                              const Transform2& initial_guess, const IcpConfig& cfg = {}) {
  if (scan1.size() < 3 || scan2.size() < 3) throw InputError("icp_baseline needs at least 3 points per scan");
  const SpatialHash index(scan1, cfg.max_correspondence_distance);
  IcpResult res;
  res.transform = initial_guess;
  std::vector<Vec2> src, dst;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    src.clear();
    dst.clear();
    for (const Vec2& p : scan2) {
      const auto nn = index.nearest(res.transform.apply(p), cfg.max_correspondence_distance);
      if (!nn) continue;
      src.push_back(p);
      dst.push_back(scan1[*nn]);
    }
    res.correspondences = src.size();
    res.iterations = it + 1;
    if (src.size() < 3) return res;
    const Transform2 next = fit_rigid(src, dst);
    const double change = std::hypot(next.dx - res.transform.dx, next.dy - res.transform.dy) +
                          std::abs(normalize_angle(next.dtheta - res.transform.dtheta));
    res.transform = next;
    if (change < cfg.tolerance) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace radalign
