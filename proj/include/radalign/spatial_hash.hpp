#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "radalign/geometry.hpp"

namespace radalign {

// Uniform-grid bucket index over a fixed point set. Queries with radius up to
// the cell size touch 3x3 buckets.
class SpatialHash {
 public:
  SpatialHash(std::span<const Vec2> points, double cell_size) : points_(points), cell_(cell_size) {
    buckets_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) buckets_[key(cell_of(points[i].x), cell_of(points[i].y))].push_back(i);
  }

  double cell_size() const noexcept { return cell_; }

  // Indices of points within `radius` of q (inclusive), in ascending index order per bucket.
  template <class Fn>
  void for_each_within(Vec2 q, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const std::int64_t x0 = cell_of(q.x - radius), x1 = cell_of(q.x + radius);
    const std::int64_t y0 = cell_of(q.y - radius), y1 = cell_of(q.y + radius);
    for (std::int64_t cx = x0; cx <= x1; ++cx) {
      for (std::int64_t cy = y0; cy <= y1; ++cy) {
        auto it = buckets_.find(key(cx, cy));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second) {
          if (squared_norm(points_[i] - q) <= r2) fn(i);
        }
      }
    }
  }

  std::vector<std::size_t> within(Vec2 q, double radius) const {
    std::vector<std::size_t> out;
    for_each_within(q, radius, [&](std::size_t i) { out.push_back(i); });
    return out;
  }

  // Closest point within max_dist; ties go to the lower index.
  std::optional<std::size_t> nearest(Vec2 q, double max_dist) const {
    std::optional<std::size_t> best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for_each_within(q, max_dist, [&](std::size_t i) {
      const double d2 = squared_norm(points_[i] - q);
      if (d2 < best_d2 || (d2 == best_d2 && i < *best)) {
        best_d2 = d2;
        best = i;
      }
    });
    return best;
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t key(std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(cx) << 32) ^ (static_cast<std::uint64_t>(cy) & 0xffffffffULL);
  }

  std::span<const Vec2> points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace radalign
