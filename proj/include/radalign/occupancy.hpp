#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "radalign/error.hpp"
#include "radalign/format.hpp"
#include "radalign/geometry.hpp"
#include "radalign/pairs.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

struct GlobalCloud {
  std::vector<Vec2> points;
  std::vector<PoseKey> provenance;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Every scan point moved into the world frame by its pose. `poses` follows
// dataset order (drives as listed, then pose index).
inline GlobalCloud aggregate(const FleetDataset& ds, const std::vector<Pose2>& poses) {
  if (poses.size() != ds.pose_count()) {
    throw InputError("aggregate: " + std::to_string(poses.size()) + " poses for " + std::to_string(ds.pose_count()) +
                     " scans");
  }
  GlobalCloud cloud;
  std::size_t k = 0;
  for (std::size_t d = 0; d < ds.drives.size(); ++d) {
    for (std::size_t i = 0; i < ds.drives[d].records.size(); ++i, ++k) {
      for (const Vec2& p : ds.drives[d].records[i].scan) {
        cloud.points.push_back(to_world(poses[k], p));
        cloud.provenance.push_back({d, i});
      }
    }
  }
  return cloud;
}

inline std::vector<Pose2> noisy_poses(const FleetDataset& ds) {
  std::vector<Pose2> out;
  for (const auto& d : ds.drives) {
    for (const auto& r : d.records) out.push_back(r.noisy);
  }
  return out;
}

inline std::vector<Pose2> truth_poses(const FleetDataset& ds) {
  std::vector<Pose2> out;
  for (const auto& d : ds.drives) {
    for (const auto& r : d.records) out.push_back(r.truth);
  }
  return out;
}

inline void write_cloud_csv(const FleetDataset& ds, const GlobalCloud& cloud, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "x,y,drive_id,pose_index\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << format_double(cloud.points[i].x) << ',' << format_double(cloud.points[i].y) << ','
        << ds.drives[cloud.provenance[i].drive].drive_id << ',' << cloud.provenance[i].index << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

// Raster placement on the lattice anchored at the world origin. Column c
// spans x in [x0 + c*cs, x0 + (c+1)*cs); row r (north-up) spans
// y in [y_top - (r+1)*cs, y_top - r*cs).
struct RasterFrame {
  double cell_size = 0.1;
  std::int64_t i0 = 0;  // lattice column of the west edge
  std::int64_t j0 = 0;  // lattice row of the south edge
  std::int64_t nx = 0;
  std::int64_t ny = 0;

  double west() const { return static_cast<double>(i0) * cell_size; }
  double north() const { return static_cast<double>(j0 + ny) * cell_size; }
  std::size_t cell_count() const { return static_cast<std::size_t>(nx * ny); }

  // Raster (row, col) of a world point, or false if outside.
  bool locate(Vec2 p, std::int64_t& row, std::int64_t& col) const {
    const auto i = static_cast<std::int64_t>(std::floor(p.x / cell_size));
    const auto j = static_cast<std::int64_t>(std::floor(p.y / cell_size));
    if (i < i0 || i >= i0 + nx || j < j0 || j >= j0 + ny) return false;
    col = i - i0;
    row = (j0 + ny - 1) - j;
    return true;
  }
  Vec2 cell_center(std::int64_t row, std::int64_t col) const {
    return {(static_cast<double>(i0 + col) + 0.5) * cell_size, (static_cast<double>(j0 + ny - 1 - row) + 0.5) * cell_size};
  }
  friend bool operator==(const RasterFrame&, const RasterFrame&) = default;
};

// Smallest frame holding every point of every cloud.
inline RasterFrame frame_for(const std::vector<const GlobalCloud*>& clouds, double cell_size) {
  if (!(cell_size > 0)) throw ConfigError("occupancy.cell_size must be > 0");
  std::int64_t ilo = std::numeric_limits<std::int64_t>::max(), jlo = ilo;
  std::int64_t ihi = std::numeric_limits<std::int64_t>::min(), jhi = ihi;
  for (const auto* c : clouds) {
    for (const Vec2& p : c->points) {
      const auto i = static_cast<std::int64_t>(std::floor(p.x / cell_size));
      const auto j = static_cast<std::int64_t>(std::floor(p.y / cell_size));
      ilo = std::min(ilo, i);
      ihi = std::max(ihi, i);
      jlo = std::min(jlo, j);
      jhi = std::max(jhi, j);
    }
  }
  if (ilo > ihi) throw InputError("occupancy: empty cloud");
  return {cell_size, ilo, jlo, ihi - ilo + 1, jhi - jlo + 1};
}

struct Histogram {
  RasterFrame frame;
  std::vector<std::uint32_t> counts;  // north-up rows

  std::uint32_t max_count() const { return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end()); }
};

inline Histogram histogram(const GlobalCloud& cloud, const RasterFrame& frame) {
  Histogram h{frame, std::vector<std::uint32_t>(frame.cell_count(), 0)};
  for (const Vec2& p : cloud.points) {
    std::int64_t r = 0, c = 0;
    if (frame.locate(p, r, c)) ++h.counts[static_cast<std::size_t>(r * frame.nx + c)];
  }
  return h;
}

struct OccupancyConfig {
  double cell_size = 0.1;
  double sigmoid_shift = 0.05;
  double sigmoid_scale = 60.0;

  void validate() const {
    if (!(cell_size > 0)) throw ConfigError("occupancy.cell_size must be > 0");
    if (!std::isfinite(sigmoid_shift)) throw ConfigError("occupancy.sigmoid_shift must be finite");
    if (!(sigmoid_scale > 0)) throw ConfigError("occupancy.sigmoid_scale must be > 0");
  }
};

struct OccupancyGrid {
  RasterFrame frame;
  double sigmoid_shift = 0.05;
  double sigmoid_scale = 60.0;
  std::vector<double> values;         // north-up rows, in [0, 1]
  std::vector<std::uint32_t> counts;  // histogram the values came from

  double at(std::int64_t row, std::int64_t col) const { return values[static_cast<std::size_t>(row * frame.nx + col)]; }
};

inline double sigmoid_contrast(double v, double shift, double scale) { return 1.0 / (1.0 + std::exp(-scale * (v - shift))); }

// Max-normalized histogram followed by the sigmoid contrast.
inline OccupancyGrid render_occupancy(const GlobalCloud& cloud, const RasterFrame& frame, const OccupancyConfig& cfg) {
  cfg.validate();
  if (cloud.empty()) throw InputError("occupancy: empty cloud");
  Histogram h = histogram(cloud, frame);
  const double peak = h.max_count();
  OccupancyGrid g{frame, cfg.sigmoid_shift, cfg.sigmoid_scale, {}, std::move(h.counts)};
  g.values.resize(g.counts.size());
  for (std::size_t i = 0; i < g.counts.size(); ++i) {
    const double v = peak > 0 ? g.counts[i] / peak : 0.0;
    g.values[i] = sigmoid_contrast(v, cfg.sigmoid_shift, cfg.sigmoid_scale);
  }
  return g;
}

inline OccupancyGrid render_occupancy(const GlobalCloud& cloud, const OccupancyConfig& cfg = {}) {
  if (cloud.empty()) throw InputError("occupancy: empty cloud");
  return render_occupancy(cloud, frame_for({&cloud}, cfg.cell_size), cfg);
}

// Cells whose count is the largest within `radius` (ties go to the first cell
// in raster order) and at least min_count. Counts order cells exactly as the
// contrast-mapped values do.
inline std::vector<Vec2> local_maxima(const OccupancyGrid& g, double radius, std::uint32_t min_count = 1) {
  const auto& f = g.frame;
  const auto reach = static_cast<std::int64_t>(std::floor(radius / f.cell_size));
  const double r2 = (radius / f.cell_size) * (radius / f.cell_size);
  std::vector<Vec2> out;
  for (std::int64_t r = 0; r < f.ny; ++r) {
    for (std::int64_t c = 0; c < f.nx; ++c) {
      const std::uint32_t v = g.counts[static_cast<std::size_t>(r * f.nx + c)];
      if (v < min_count || v == 0) continue;
      bool is_max = true;
      for (std::int64_t dr = -reach; dr <= reach && is_max; ++dr) {
        for (std::int64_t dc = -reach; dc <= reach; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (static_cast<double>(dr * dr + dc * dc) > r2) continue;
          const std::int64_t rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= f.ny || cc < 0 || cc >= f.nx) continue;
          const std::uint32_t w = g.counts[static_cast<std::size_t>(rr * f.nx + cc)];
          const bool earlier = rr < r || (rr == r && cc < c);
          if (w > v || (w == v && earlier)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) out.push_back(f.cell_center(r, c));
    }
  }
  return out;
}

// Binary 16-bit PGM, big-endian samples, value = round(v * 65535).
inline void write_pgm16(const OccupancyGrid& g, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "P5\n" << g.frame.nx << ' ' << g.frame.ny << "\n65535\n";
  std::string row;
  row.reserve(static_cast<std::size_t>(2 * g.frame.nx));
  for (std::int64_t r = 0; r < g.frame.ny; ++r) {
    row.clear();
    for (std::int64_t c = 0; c < g.frame.nx; ++c) {
      const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(g.at(r, c), 0.0, 1.0) * 65535.0));
      row.push_back(static_cast<char>(v >> 8));
      row.push_back(static_cast<char>(v & 0xff));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed for " + file.string());
}

// Six-line world file: pixel sizes, rotation terms and the centre of the
// upper-left pixel.
inline void write_world_file(const RasterFrame& f, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  const Vec2 ul = f.cell_center(0, 0);
  out << format_double(f.cell_size) << "\n0\n0\n" << format_double(-f.cell_size) << '\n'
      << format_double(ul.x) << '\n' << format_double(ul.y) << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace radalign
