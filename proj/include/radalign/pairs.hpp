#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "radalign/error.hpp"
#include "radalign/format.hpp"
#include "radalign/rng.hpp"
#include "radalign/spatial_hash.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

// (drive position in the dataset, pose index within the drive)
struct PoseKey {
  std::size_t drive = 0;
  std::size_t index = 0;
  friend auto operator<=>(const PoseKey&, const PoseKey&) = default;
};

enum class PairKind { cross_drive, consecutive };

inline std::string_view to_string(PairKind k) { return k == PairKind::cross_drive ? "cross" : "consecutive"; }

struct PairCandidate {
  PoseKey a;
  PoseKey b;
  PairKind kind = PairKind::cross_drive;
  friend auto operator<=>(const PairCandidate&, const PairCandidate&) = default;
};

struct SamplingConfig {
  double max_distance = 20.0;
  double rate = 0.10;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("sampling.rate must be in (0, 1]");
    if (!(max_distance > 0.0)) throw ConfigError("sampling.max_distance must be > 0");
  }
};

// Counter-based Bernoulli draw so the outcome of a pair never depends on
// enumeration order.
inline bool keep_pair(const FleetDataset& ds, const PairCandidate& p, const SamplingConfig& cfg) {
  std::uint64_t h = derive_seed(cfg.seed, "pairs");
  h = derive_seed(h, ds.drives[p.a.drive].drive_id);
  h = derive_seed(h, static_cast<std::uint64_t>(p.a.index));
  h = derive_seed(h, ds.drives[p.b.drive].drive_id);
  h = derive_seed(h, static_cast<std::uint64_t>(p.b.index));
  return unit_from_hash(h) < cfg.rate;
}

// Cross-drive candidates within max_distance (noisy positions), Bernoulli
// subsampled, plus every consecutive pair of every drive. Sorted.
inline std::vector<PairCandidate> sample_pairs(const FleetDataset& ds, const SamplingConfig& cfg) {
  cfg.validate();
  std::vector<Vec2> positions;
  std::vector<PoseKey> keys;
  for (std::size_t d = 0; d < ds.drives.size(); ++d) {
    const auto& recs = ds.drives[d].records;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      positions.push_back(recs[i].noisy.position());
      keys.push_back({d, i});
    }
  }

  std::vector<PairCandidate> out;
  const SpatialHash index(positions, cfg.max_distance);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    index.for_each_within(positions[i], cfg.max_distance, [&](std::size_t j) {
      if (keys[j].drive <= keys[i].drive) return;
      const PairCandidate c{keys[i], keys[j], PairKind::cross_drive};
      if (keep_pair(ds, c, cfg)) out.push_back(c);
    });
  }
  for (std::size_t d = 0; d < ds.drives.size(); ++d) {
    for (std::size_t i = 0; i + 1 < ds.drives[d].records.size(); ++i) {
      out.push_back({{d, i}, {d, i + 1}, PairKind::consecutive});
    }
  }
  std::sort(out.begin(), out.end(), [](const PairCandidate& x, const PairCandidate& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return out;
}

inline void write_pairs_csv(const FleetDataset& ds, const std::vector<PairCandidate>& pairs,
                            const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "drive_a,idx_a,drive_b,idx_b,kind\n";
  for (const auto& p : pairs) {
    out << ds.drives[p.a.drive].drive_id << ',' << p.a.index << ',' << ds.drives[p.b.drive].drive_id << ','
        << p.b.index << ',' << to_string(p.kind) << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace radalign
