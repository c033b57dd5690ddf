#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "radalign/error.hpp"
#include "radalign/geometry.hpp"
#include "radalign/pairs.hpp"

namespace radalign {

using RadarScan = std::vector<Vec2>;

inline constexpr double kDefaultCellSize = 0.1;
inline constexpr double kDefaultPointVariance = 0.05;

// Grids live on a lattice anchored at the origin of the frame the points are
// expressed in: lattice cell (i, j) spans [i*cs, (i+1)*cs) x [j*cs, (j+1)*cs).
// A SplatGrid stores the window [i0, i0+nx) x [j0, j0+ny) of that lattice in
// rows of constant j, x-contiguous.
struct SplatGrid {
  double cell_size = kDefaultCellSize;
  std::int64_t i0 = 0;
  std::int64_t j0 = 0;
  std::int64_t nx = 0;
  std::int64_t ny = 0;
  std::vector<double> values;

  Vec2 origin() const { return {static_cast<double>(i0) * cell_size, static_cast<double>(j0) * cell_size}; }
  Vec2 cell_center(std::int64_t i, std::int64_t j) const {
    return {(static_cast<double>(i) + 0.5) * cell_size, (static_cast<double>(j) + 0.5) * cell_size};
  }
  bool contains(std::int64_t i, std::int64_t j) const { return i >= i0 && i < i0 + nx && j >= j0 && j < j0 + ny; }
  // Lattice-indexed lookup; cells outside the stored window read as 0.
  double at(std::int64_t i, std::int64_t j) const {
    return contains(i, j) ? values[static_cast<std::size_t>((j - j0) * nx + (i - i0))] : 0.0;
  }
};

namespace detail {

inline std::int64_t lattice_index(double v, double cs) { return static_cast<std::int64_t>(std::floor(v / cs)); }

struct CellBox {
  std::int64_t i_lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t j_lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t i_hi = std::numeric_limits<std::int64_t>::min();
  std::int64_t j_hi = std::numeric_limits<std::int64_t>::min();

  bool empty() const { return i_lo > i_hi || j_lo > j_hi; }
  void include(std::int64_t i, std::int64_t j) {
    i_lo = std::min(i_lo, i);
    i_hi = std::max(i_hi, i);
    j_lo = std::min(j_lo, j);
    j_hi = std::max(j_hi, j);
  }
  void include(const CellBox& o) {
    if (o.empty()) return;
    include(o.i_lo, o.j_lo);
    include(o.i_hi, o.j_hi);
  }
  CellBox dilated(std::int64_t k) const { return {i_lo - k, j_lo - k, i_hi + k, j_hi + k}; }
};

// Cells whose centre can lie within `radius` of some point.
inline CellBox support_box(std::span<const Vec2> pts, double cs, double radius) {
  CellBox box;
  for (const Vec2& p : pts) {
    box.include(lattice_index(p.x - radius, cs), lattice_index(p.y - radius, cs));
    box.include(lattice_index(p.x + radius, cs), lattice_index(p.y + radius, cs));
  }
  return box;
}

inline SplatGrid make_grid(const CellBox& box, double cs) {
  SplatGrid g;
  g.cell_size = cs;
  if (box.empty()) return g;
  g.i0 = box.i_lo;
  g.j0 = box.j_lo;
  g.nx = box.i_hi - box.i_lo + 1;
  g.ny = box.j_hi - box.j_lo + 1;
  g.values.assign(static_cast<std::size_t>(g.nx * g.ny), 0.0);
  return g;
}

// Adds the 3-sigma-truncated isotropic normal density of each point to the
// grid, clipped to the grid's window.
inline void splat_into(SplatGrid& g, std::span<const Vec2> pts, double variance) {
  const double cs = g.cell_size;
  const double radius = 3.0 * std::sqrt(variance);
  const double r2 = radius * radius;
  const double norm_const = 1.0 / (kTwoPi * variance);
  const double inv_two_var = 1.0 / (2.0 * variance);
  for (const Vec2& p : pts) {
    const std::int64_t ilo = std::max(g.i0, lattice_index(p.x - radius, cs));
    const std::int64_t ihi = std::min(g.i0 + g.nx - 1, lattice_index(p.x + radius, cs));
    const std::int64_t jlo = std::max(g.j0, lattice_index(p.y - radius, cs));
    const std::int64_t jhi = std::min(g.j0 + g.ny - 1, lattice_index(p.y + radius, cs));
    for (std::int64_t j = jlo; j <= jhi; ++j) {
      const double dy = (static_cast<double>(j) + 0.5) * cs - p.y;
      double* row = g.values.data() + (j - g.j0) * g.nx;
      for (std::int64_t i = ilo; i <= ihi; ++i) {
        const double dx = (static_cast<double>(i) + 0.5) * cs - p.x;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= r2) row[i - g.i0] += norm_const * std::exp(-d2 * inv_two_var);
      }
    }
  }
}

}  // namespace detail

// Gaussian-splatted grid of a scan: every cell holds the sum over points of
// the N(point, variance * I) density at the cell centre, truncated at 3 sigma.
inline SplatGrid splat(std::span<const Vec2> scan, double cell_size = kDefaultCellSize,
                       double point_variance = kDefaultPointVariance) {
  if (scan.empty()) throw EmptyScanError("cannot splat an empty scan");
  const double radius = 3.0 * std::sqrt(point_variance);
  SplatGrid g = detail::make_grid(detail::support_box(scan, cell_size, radius), cell_size);
  detail::splat_into(g, scan, point_variance);
  return g;
}

struct SearchWindow {
  double eps_r = deg2rad(1.0);
  double eps_l = 2.0;
  double step_r = deg2rad(0.1);
  double step_l = 0.1;

  int rotation_half_steps() const { return static_cast<int>(std::lround(eps_r / step_r)); }
  int translation_half_steps() const { return static_cast<int>(std::lround(eps_l / step_l)); }

  void validate(double cell_size) const {
    if (!(eps_r >= 0 && eps_l >= 0 && step_r > 0 && step_l > 0)) {
      throw ConfigError("search window: eps must be >= 0 and steps > 0");
    }
    if (std::abs(step_l - cell_size) > 1e-12) throw ConfigError("search window: step_l must equal the cell size");
    auto integral = [](double v) { return std::abs(v - std::round(v)) <= 1e-9; };
    if (!integral(eps_r / step_r)) throw ConfigError("search window: eps_r / step_r must be an integer");
    if (!integral(eps_l / step_l)) throw ConfigError("search window: eps_l / step_l must be an integer");
  }
};

struct CorrelationConfig {
  double cell_size = kDefaultCellSize;
  double point_variance = kDefaultPointVariance;
  SearchWindow window;

  void validate() const {
    if (!(cell_size > 0)) throw ConfigError("correlation.cell_size must be > 0");
    if (!(point_variance > 0)) throw ConfigError("correlation.point_variance must be > 0");
    window.validate(cell_size);
  }
};

// rho(r, x, y) over the search window; index (r, x, y) maps to rotation
// (r - R) * step_r and a shift of scan 2 by (x - L, y - L) cells.
struct CorrelationVolume {
  int rotation_half = 0;
  int shift_half = 0;
  double step_r = 0.0;
  double cell_size = 0.0;
  std::vector<double> values;

  int nr() const { return 2 * rotation_half + 1; }
  int ns() const { return 2 * shift_half + 1; }
  std::size_t offset(int r, int x, int y) const {
    return (static_cast<std::size_t>(r) * ns() + static_cast<std::size_t>(x)) * ns() + static_cast<std::size_t>(y);
  }
  double at(int r, int x, int y) const { return values[offset(r, x, y)]; }
  double rotation(int r) const { return (r - rotation_half) * step_r; }
  double shift(int k) const { return (k - shift_half) * cell_size; }
};

enum class EdgeFlag { ok, boundary, degenerate, not_converged };

inline std::string_view to_string(EdgeFlag f) {
  switch (f) {
    case EdgeFlag::ok: return "ok";
    case EdgeFlag::boundary: return "boundary";
    case EdgeFlag::degenerate: return "degenerate";
    case EdgeFlag::not_converged: return "not_converged";
  }
  return "?";
}

inline EdgeFlag edge_flag_from_string(std::string_view s) {
  if (s == "ok") return EdgeFlag::ok;
  if (s == "boundary") return EdgeFlag::boundary;
  if (s == "degenerate") return EdgeFlag::degenerate;
  if (s == "not_converged") return EdgeFlag::not_converged;
  throw InputError("unknown edge flag '" + std::string(s) + "'");
}

struct CorrelationResult {
  PairCandidate pair;
  Transform2 transform;  // pose b in the frame of pose a, refined
  double peak = 0.0;
  double z_score = 0.0;
  EdgeFlag flag = EdgeFlag::ok;
  int r_index = 0;
  int x_index = 0;
  int y_index = 0;

  bool on_boundary() const { return flag == EdgeFlag::boundary; }
};

struct CorrelationOutput {
  CorrelationResult result;
  CorrelationVolume volume;
};

namespace detail {

inline std::vector<Vec2> place_scan(std::span<const Vec2> scan, const Transform2& initial_guess, double rotation) {
  std::vector<Vec2> out;
  out.reserve(scan.size());
  for (const Vec2& p : scan) out.push_back(initial_guess.apply(rotate(p, rotation)));
  return out;
}

// First and one-past-last nonzero index of a row.
inline std::pair<std::int64_t, std::int64_t> nonzero_extent(const double* row, std::int64_t n) {
  std::int64_t lo = 0, hi = n;
  while (lo < hi && row[lo] == 0.0) ++lo;
  while (hi > lo && row[hi - 1] == 0.0) --hi;
  return {lo, hi};
}

// acc[k] += sum_b g2row[b] * g1row[b + k] for b in [b_lo, b_hi), k < NS.
template <int NS>
void correlate_row(double* __restrict acc, const double* __restrict g2row, const double* __restrict g1row,
                   std::int64_t b_lo, std::int64_t b_hi) {
  double local[NS] = {};
  for (std::int64_t b = b_lo; b < b_hi; ++b) {
    const double v = g2row[b];
    if (v == 0.0) continue;
    const double* src = g1row + b;
    for (int k = 0; k < NS; ++k) local[k] += v * src[k];
  }
  for (int k = 0; k < NS; ++k) acc[k] += local[k];
}

inline void correlate_row(double* __restrict acc, const double* __restrict g2row, const double* __restrict g1row,
                          std::int64_t b_lo, std::int64_t b_hi, int ns) {
  for (std::int64_t b = b_lo; b < b_hi; ++b) {
    const double v = g2row[b];
    if (v == 0.0) continue;
    const double* src = g1row + b;
    for (int k = 0; k < ns; ++k) acc[k] += v * src[k];
  }
}

// The reference grid re-laid over a column range wide enough that every
// shifted read of a scan 2 row stays in bounds; rows outside the original
// grid and all added columns are zero.
struct PaddedReference {
  std::int64_t i0 = 0;
  std::int64_t j0 = 0;
  std::int64_t nx = 0;
  std::int64_t ny = 0;
  std::vector<double> values;
  std::vector<std::pair<std::int64_t, std::int64_t>> extent;

  PaddedReference(const SplatGrid& g1, std::int64_t i_first, std::int64_t i_last)
      : i0(i_first), j0(g1.j0), nx(i_last - i_first), ny(g1.ny) {
    values.assign(static_cast<std::size_t>(nx * ny), 0.0);
    extent.resize(static_cast<std::size_t>(ny));
    const std::int64_t lo = std::max(g1.i0, i0);
    const std::int64_t hi = std::min(g1.i0 + g1.nx, i0 + nx);
    for (std::int64_t r = 0; r < ny; ++r) {
      double* row = values.data() + r * nx;
      const double* src = g1.values.data() + r * g1.nx;
      for (std::int64_t i = lo; i < hi; ++i) row[i - i0] = src[i - g1.i0];
      extent[static_cast<std::size_t>(r)] = nonzero_extent(row, nx);
    }
  }
};

// Accumulates one rotation slice: slice[x][y] += sum_c G2[c] * G1[c + s].
inline void accumulate_slice(double* slice, const PaddedReference& ref, const SplatGrid& g2, int L) {
  const int ns = 2 * L + 1;
  std::vector<double> acc(static_cast<std::size_t>(ns));
  // Reference column read by G2 column b at shift index k is col0 + b + k.
  const std::int64_t col0 = g2.i0 - L - ref.i0;
  for (std::int64_t a = 0; a < g2.ny; ++a) {
    const double* g2row = g2.values.data() + a * g2.nx;
    const auto [b_lo, b_hi] = nonzero_extent(g2row, g2.nx);
    if (b_lo == b_hi) continue;
    const std::int64_t j = g2.j0 + a;
    for (int sy = 0; sy < ns; ++sy) {
      const std::int64_t r = j + sy - L - ref.j0;
      if (r < 0 || r >= ref.ny) continue;
      const auto [nz_lo, nz_hi] = ref.extent[static_cast<std::size_t>(r)];
      // Only G2 columns whose shift window meets the nonzero part of the row.
      const std::int64_t lo = std::max(b_lo, nz_lo - col0 - ns + 1);
      const std::int64_t hi = std::min(b_hi, nz_hi - col0);
      if (lo >= hi) continue;
      const double* g1row = ref.values.data() + r * ref.nx + col0;
      std::fill(acc.begin(), acc.end(), 0.0);
      if (ns == 41) {
        correlate_row<41>(acc.data(), g2row, g1row, lo, hi);
      } else {
        correlate_row(acc.data(), g2row, g1row, lo, hi, ns);
      }
      for (int sx = 0; sx < ns; ++sx) slice[static_cast<std::size_t>(sx) * ns + sy] += acc[static_cast<std::size_t>(sx)];
    }
  }
}

// Picks the argmax with the documented tie-breaking and fills the statistics.
inline CorrelationResult summarize_volume(const CorrelationVolume& vol, const Transform2& initial_guess) {
  const std::size_t n = vol.values.size();
  double mean = 0.0;
  for (double v : vol.values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : vol.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n));
  if (!(stddev > 0.0) || !std::isfinite(stddev)) {
    throw DegenerateCorrelationError("flat correlation volume (std = 0); pair must be discarded");
  }

  const int R = vol.rotation_half, L = vol.shift_half;
  int br = 0, bx = 0, by = 0;
  double best = -std::numeric_limits<double>::infinity();
  auto tie_key = [&](int r, int x, int y) {
    return std::tuple(std::abs(r - R), (x - L) * (x - L) + (y - L) * (y - L), r, x, y);
  };
  for (int r = 0; r < vol.nr(); ++r) {
    for (int x = 0; x < vol.ns(); ++x) {
      for (int y = 0; y < vol.ns(); ++y) {
        const double v = vol.at(r, x, y);
        if (v > best || (v == best && tie_key(r, x, y) < tie_key(br, bx, by))) {
          best = v;
          br = r;
          bx = x;
          by = y;
        }
      }
    }
  }

  CorrelationResult res;
  res.peak = best;
  res.z_score = (best - mean) / stddev;
  res.r_index = br;
  res.x_index = bx;
  res.y_index = by;
  const bool r_edge = R > 0 && (br == 0 || br == vol.nr() - 1);
  const bool xy_edge = L > 0 && (bx == 0 || bx == vol.ns() - 1 || by == 0 || by == vol.ns() - 1);
  res.flag = (r_edge || xy_edge) ? EdgeFlag::boundary : EdgeFlag::ok;
  const Transform2 shift{vol.shift(bx), vol.shift(by), 0.0};
  res.transform = compose(compose(shift, initial_guess), Transform2{0.0, 0.0, vol.rotation(br)});
  return res;
}

}  // namespace detail

// Splat of scan 1 over the lattice region needed to evaluate every shift of
// every rotation of scan 2.
inline SplatGrid reference_grid(std::span<const Vec2> scan1, std::span<const Vec2> scan2,
                                const Transform2& initial_guess, const CorrelationConfig& cfg) {
  const int R = cfg.window.rotation_half_steps();
  const int L = cfg.window.translation_half_steps();
  const double radius = 3.0 * std::sqrt(cfg.point_variance);
  detail::CellBox region;
  for (int r = -R; r <= R; ++r) {
    const auto placed = detail::place_scan(scan2, initial_guess, r * cfg.window.step_r);
    region.include(detail::support_box(placed, cfg.cell_size, radius));
  }
  SplatGrid g1 = detail::make_grid(region.dilated(L), cfg.cell_size);
  detail::splat_into(g1, scan1, cfg.point_variance);
  return g1;
}

// Correlation sweep of scan 2 against an already splatted reference grid.
// Cells outside the grid's window count as zero.
inline CorrelationOutput correlate_against(const SplatGrid& g1, std::span<const Vec2> scan2,
                                           const Transform2& initial_guess, const CorrelationConfig& cfg) {
  if (scan2.empty()) throw EmptyScanError("correlate: scan 2 is empty");
  cfg.validate();
  const int R = cfg.window.rotation_half_steps();
  const int L = cfg.window.translation_half_steps();
  const double radius = 3.0 * std::sqrt(cfg.point_variance);

  CorrelationVolume vol;
  vol.rotation_half = R;
  vol.shift_half = L;
  vol.step_r = cfg.window.step_r;
  vol.cell_size = cfg.cell_size;
  const int ns = vol.ns();
  vol.values.assign(static_cast<std::size_t>(vol.nr()) * ns * ns, 0.0);

  std::vector<std::vector<Vec2>> placed;
  std::vector<detail::CellBox> boxes;
  std::int64_t i_first = std::numeric_limits<std::int64_t>::max();
  std::int64_t i_last = std::numeric_limits<std::int64_t>::min();
  for (int r = 0; r < vol.nr(); ++r) {
    placed.push_back(detail::place_scan(scan2, initial_guess, vol.rotation(r)));
    boxes.push_back(detail::support_box(placed.back(), cfg.cell_size, radius));
    i_first = std::min(i_first, boxes.back().i_lo - L);
    i_last = std::max(i_last, boxes.back().i_hi + L + 1);
  }
  const detail::PaddedReference ref(g1, i_first, i_last);

  for (int r = 0; r < vol.nr(); ++r) {
    SplatGrid g2 = detail::make_grid(boxes[static_cast<std::size_t>(r)], cfg.cell_size);
    detail::splat_into(g2, placed[static_cast<std::size_t>(r)], cfg.point_variance);
    detail::accumulate_slice(vol.values.data() + vol.offset(r, 0, 0), ref, g2, L);
  }

  CorrelationOutput out;
  out.result = detail::summarize_volume(vol, initial_guess);
  out.volume = std::move(vol);
  return out;
}

// Exhaustive grid-based fitting of scan 2 (pose b) against scan 1 (pose a).
// initial_guess is b in the frame of a; each rotation turns scan 2 about its
// own origin before the guess is applied, and the shift moves it afterwards.
inline CorrelationOutput correlate(std::span<const Vec2> scan1, std::span<const Vec2> scan2,
                                   const Transform2& initial_guess, const CorrelationConfig& cfg = {}) {
  if (scan1.empty()) throw EmptyScanError("correlate: scan 1 is empty");
  if (scan2.empty()) throw EmptyScanError("correlate: scan 2 is empty");
  cfg.validate();
  const SplatGrid g1 = reference_grid(scan1, scan2, initial_guess, cfg);
  return correlate_against(g1, scan2, initial_guess, cfg);
}

}  // namespace radalign
