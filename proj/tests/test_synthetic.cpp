#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <gtest/gtest.h>
#include <json.hpp>

#include "radalign/dataset_io.hpp"
#include "radalign/pairs.hpp"
#include "radalign/rng.hpp"
#include "radalign/spatial_hash.hpp"
#include "radalign/synthetic.hpp"

using namespace radalign;
namespace fs = std::filesystem;

namespace {

SceneSpec short_scene(double length = 300.0) {
  SceneSpec s;
  s.corridor_length = length;
  return s;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("radalign_synth_" + name);
  fs::remove_all(p);
  return p;
}

const FleetDataset& default_fleet() {
  static const FleetDataset ds = generate_fleet(SceneSpec{}, default_drive_specs(5), 42);
  return ds;
}

}  // namespace

TEST(Scene, PostCountAndSpacingWithoutJitter) {
  SceneSpec s;
  s.guardrail_post_spacing = 4.0;
  s.corridor_length = 100.0;
  s.reflector_jitter = 0.0;
  const Scene scene = generate_scene(s, 1);
  std::map<Rail, std::vector<double>> xs;
  for (const auto& p : scene.posts) {
    EXPECT_EQ(p.pos, p.nominal);
    xs[p.rail].push_back(p.pos.x);
  }
  ASSERT_EQ(xs.size(), 3u);
  for (auto& [rail, v] : xs) {
    ASSERT_EQ(v.size(), 26u);
    std::sort(v.begin(), v.end());
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_DOUBLE_EQ(v[k], 4.0 * static_cast<double>(k));
  }
}

TEST(Scene, Deterministic) {
  EXPECT_EQ(generate_scene(SceneSpec{}, 9), generate_scene(SceneSpec{}, 9));
  EXPECT_NE(generate_scene(SceneSpec{}, 9).posts, generate_scene(SceneSpec{}, 10).posts);
}

TEST(Scene, JitterMatchesOwnDrawsAndStaysWithinFourSigma) {
  SceneSpec s;
  const Scene scene = generate_scene(s, 77);
  // Replay the generator's stream: posts are drawn rail by rail, x then y.
  Rng rng(derive_seed(77, "scene"));
  for (const auto& p : scene.posts) {
    const double jx = rng.normal(s.reflector_jitter);
    const double jy = rng.normal(s.reflector_jitter);
    EXPECT_EQ(p.pos.x, p.nominal.x + jx);
    EXPECT_EQ(p.pos.y, p.nominal.y + jy);
    EXPECT_LE(norm(p.pos - p.nominal), 4 * s.reflector_jitter);
  }
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec s;
  s.guardrail_post_spacing = 0;
  EXPECT_THROW(generate_scene(s, 1), ConfigError);
  s = SceneSpec{};
  s.reflector_jitter = -0.1;
  EXPECT_THROW(generate_scene(s, 1), ConfigError);
}

TEST(DriveSpec, InvalidSigmaRejected) {
  DriveSpec d;
  d.gnss_sigma_xy = -1;
  EXPECT_THROW(d.validate(), ConfigError);
  d = DriveSpec{};
  d.detection_probability = 0;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Drive, ZeroGnssNoiseGivesTruth) {
  auto specs = default_drive_specs(2);
  for (auto& d : specs) {
    d.gnss_sigma_xy = 0;
    d.gnss_sigma_theta = 0;
    d.gnss_bias_walk_sigma = 0;
  }
  const FleetDataset ds = generate_fleet(short_scene(), specs, 3);
  for (const auto& d : ds.drives) {
    ASSERT_FALSE(d.records.empty());
    for (const auto& r : d.records) EXPECT_EQ(r.noisy, r.truth);
  }
}

TEST(Drive, TimestampsIncreaseAndFollowPoseRate) {
  for (const auto& d : default_fleet().drives) {
    ASSERT_GT(d.records.size(), 10u);
    for (std::size_t i = 1; i < d.records.size(); ++i) {
      EXPECT_NEAR(d.records[i].t - d.records[i - 1].t, 0.5, 1e-12);
    }
  }
}

TEST(Drive, PerPoseNoiseWithinSearchWindow) {
  std::size_t total = 0, inside = 0;
  for (const auto& d : default_fleet().drives) {
    for (const auto& r : d.records) {
      ++total;
      const bool ok = std::abs(r.noisy.x - r.truth.x) < 2.0 && std::abs(r.noisy.y - r.truth.y) < 2.0 &&
                      std::abs(normalize_angle(r.noisy.theta - r.truth.theta)) < deg2rad(1.0);
      inside += ok;
    }
  }
  // White noise alone gives erf(2 / (0.7 sqrt 2))^2 = 0.991; the bias walk takes a little more.
  EXPECT_GE(static_cast<double>(inside), 0.98 * static_cast<double>(total));
}

// With independent per-pose noise of sigma s per axis, a pair's relative
// error has sigma s*sqrt(2) per axis, so the share inside a +-2 m window is
// erf(2 / (2 s))^2 (heading error adds little at 20 m baselines).
TEST(Drive, PairNoiseContainmentMatchesAnalyticShare) {
  const auto& ds = default_fleet();
  SamplingConfig sc;
  sc.rate = 1.0;
  std::size_t total = 0, inside = 0;
  for (const auto& p : sample_pairs(ds, sc)) {
    if (p.kind != PairKind::cross_drive) continue;
    const auto& a = ds.drives[p.a.drive].records[p.a.index];
    const auto& b = ds.drives[p.b.drive].records[p.b.index];
    const Transform2 err = compose(inverse(relative_transform(a.truth, b.truth)), relative_transform(a.noisy, b.noisy));
    ++total;
    inside += std::abs(err.dx) <= 2.0 && std::abs(err.dy) <= 2.0 && std::abs(err.dtheta) <= deg2rad(1.0);
  }
  ASSERT_GT(total, 1000u);
  const double s = 0.7 * std::sqrt(2.0);
  const double per_axis = std::erf(2.0 / (s * std::sqrt(2.0)));
  const double share = static_cast<double>(inside) / static_cast<double>(total);
  EXPECT_NEAR(share, per_axis * per_axis, 0.05);
}

TEST(Drive, ScanPointsLieOnReflectorsUnderTruthPose) {
  const auto& ds = default_fleet();
  const auto refl = true_reflectors(ds.scene);
  const SpatialHash index(refl, 1.0);
  std::size_t total = 0, within3 = 0;
  for (std::size_t d = 0; d < 2; ++d) {
    const auto& spec = default_drive_specs(5)[d];
    for (const auto& r : ds.drives[d].records) {
      for (const Vec2& p : r.scan) {
        const Vec2 w = to_world(r.truth, p);
        const auto k = index.nearest(w, 1.0);
        ASSERT_TRUE(k.has_value());
        const Vec2 ego = to_ego(r.truth, refl[*k]);
        const double dr = std::abs(norm(p) - norm(ego)) / spec.range_sigma;
        const double db = std::abs(normalize_angle(std::atan2(p.y, p.x) - std::atan2(ego.y, ego.x))) / spec.bearing_sigma;
        ++total;
        within3 += dr <= 3 && db <= 3;
        EXPECT_LE(std::max(dr, db), 6.0);
      }
    }
  }
  EXPECT_GE(static_cast<double>(within3), 0.99 * static_cast<double>(total));
}

TEST(Drive, NearbyDrivesShareStructureNotNoise) {
  const auto& ds = default_fleet();
  const auto refl = true_reflectors(ds.scene);
  const SpatialHash index(refl, 1.0);
  auto denoised = [&](const DriveData& d) {
    std::map<std::size_t, std::pair<Vec2, int>> acc;
    for (const auto& r : d.records) {
      for (const Vec2& p : r.scan) {
        const Vec2 w = to_world(r.truth, p);
        if (norm(p) > 40.0) continue;
        if (auto k = index.nearest(w, 0.5)) {
          acc[*k].first = acc[*k].first + w;
          ++acc[*k].second;
        }
      }
    }
    std::map<std::size_t, Vec2> out;
    for (auto& [k, v] : acc) {
      if (v.second >= 3) out[k] = (1.0 / v.second) * v.first;
    }
    return out;
  };
  const auto a = denoised(ds.drives[0]);
  const auto b = denoised(ds.drives[2]);
  // Bearing noise of 0.2 deg at up to 40 m is 0.14 m per point; means over
  // three or more hits differ by well under half a metre.
  std::size_t shared = 0;
  double sum = 0.0;
  for (const auto& [k, p] : a) {
    auto it = b.find(k);
    if (it == b.end()) continue;
    ++shared;
    sum += norm(p - it->second);
    EXPECT_LT(norm(p - it->second), 0.5);
  }
  EXPECT_GT(shared, 100u);
  EXPECT_LT(sum / static_cast<double>(shared), 0.15);
  EXPECT_NE(ds.drives[0].records[0].scan, ds.drives[2].records[0].scan);
}

TEST(Drive, GhostsOnlyWhenEnabled) {
  SceneSpec s = short_scene();
  const auto plain = generate_fleet(s, default_drive_specs(1), 5);
  s.ghost_reflection_enabled = true;
  const auto ghosted = generate_fleet(s, default_drive_specs(1), 5);
  std::size_t n_plain = 0, n_ghost = 0;
  for (const auto& r : plain.drives[0].records) n_plain += r.scan.size();
  for (const auto& r : ghosted.drives[0].records) n_ghost += r.scan.size();
  EXPECT_GT(n_ghost, n_plain);
  EXPECT_FALSE(ghost_reflectors(ghosted.scene, true).empty());
}

TEST(Fleet, Deterministic) {
  const auto a = generate_fleet(short_scene(), default_drive_specs(3), 8);
  const auto b = generate_fleet(short_scene(), default_drive_specs(3), 8);
  EXPECT_EQ(a, b);
  const auto c = generate_fleet(short_scene(), default_drive_specs(3), 9);
  EXPECT_NE(a.drives[0].records, c.drives[0].records);
}

TEST(DatasetIo, RoundTripTwoDrives) {
  const auto ds = generate_fleet(short_scene(), default_drive_specs(2), 12);
  const fs::path dir = temp_dir("roundtrip");
  write_dataset(ds, dir);
  EXPECT_TRUE(fs::exists(dir / "scene.json"));
  EXPECT_TRUE(fs::exists(drive_file(dir, "d0")));
  EXPECT_TRUE(fs::exists(drive_file(dir, "d1")));
  EXPECT_EQ(read_dataset(dir), ds);
  fs::remove_all(dir);
}

TEST(DatasetIo, EmptyDriveList) {
  const auto ds = generate_fleet(short_scene(), {}, 12);
  const fs::path dir = temp_dir("empty");
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  EXPECT_TRUE(back.drives.empty());
  EXPECT_EQ(back, ds);
  fs::remove_all(dir);
}

TEST(DatasetIo, NonIncreasingTimestampNamesLineAndField) {
  const auto ds = generate_fleet(short_scene(), default_drive_specs(1), 12);
  const fs::path dir = temp_dir("badtime");
  write_dataset(ds, dir);
  const fs::path file = drive_file(dir, "d0");
  std::vector<std::string> lines;
  {
    std::ifstream in(file);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  ASSERT_GT(lines.size(), 3u);
  auto j = nlohmann::json::parse(lines[2]);
  j["t"] = nlohmann::json::parse(lines[1])["t"];
  lines[2] = j.dump();
  {
    std::ofstream out(file);
    for (const auto& l : lines) out << l << '\n';
  }
  try {
    read_dataset(dir);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.field(), "t");
    EXPECT_EQ(fs::path(e.file()).filename(), file.filename());
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, MissingFieldIsParseError) {
  const auto ds = generate_fleet(short_scene(), default_drive_specs(1), 12);
  const fs::path dir = temp_dir("missing");
  write_dataset(ds, dir);
  {
    std::ofstream out(drive_file(dir, "d0"));
    out << R"({"t":0.0,"truth":[0,0,0],"sigma":[0.7,0.005],"scan":[],"detections":[]})" << '\n';
  }
  try {
    read_dataset(dir);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.field(), "noisy");
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, MissingDirectoryIsIoError) {
  EXPECT_THROW(read_dataset(temp_dir("nothing_here")), IoError);
}
