#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "radalign/occupancy.hpp"
#include "radalign/spatial_hash.hpp"

using namespace radalign;
namespace fs = std::filesystem;

namespace {

FleetDataset one_pose(Pose2 pose, std::vector<Vec2> scan) {
  FleetDataset ds;
  DriveData d;
  d.drive_id = "only";
  PoseRecord r;
  r.truth = r.noisy = pose;
  r.scan = std::move(scan);
  d.records.push_back(r);
  ds.drives.push_back(d);
  return ds;
}

const FleetDataset& small_fleet() {
  static const FleetDataset ds = generate_fleet(SceneSpec{.corridor_length = 300.0}, default_drive_specs(3), 14);
  return ds;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Aggregate, IdentityPoseKeepsPoints) {
  const std::vector<Vec2> scan{{1, 2}, {-3, 0.5}};
  const auto cloud = aggregate(one_pose({}, scan), {Pose2{}});
  EXPECT_EQ(cloud.points, scan);
  EXPECT_EQ(cloud.provenance[1], (PoseKey{0, 0}));
}

TEST(Aggregate, HalfTurn) {
  const auto cloud = aggregate(one_pose({}, {{1, 0}}), {Pose2{10, 0, kPi}});
  EXPECT_NEAR(cloud.points[0].x, 9.0, 1e-12);
  EXPECT_NEAR(cloud.points[0].y, 0.0, 1e-12);
}

TEST(Aggregate, PoseCountMismatch) {
  EXPECT_THROW(aggregate(one_pose({}, {{1, 0}}), {}), InputError);
}

TEST(Aggregate, TruthPosesPlacePointsOnReflectors) {
  const auto& ds = small_fleet();
  const auto cloud = aggregate(ds, truth_poses(ds));
  const auto refl = true_reflectors(ds.scene);
  const SpatialHash index(refl, 1.0);
  const DriveSpec spec;
  std::size_t total = 0, close = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& key = cloud.provenance[i];
    const Pose2& pose = ds.drives[key.drive].records[key.index].truth;
    const double range = norm(cloud.points[i] - pose.position());
    const double sigma = std::hypot(spec.range_sigma, range * spec.bearing_sigma);
    const auto k = index.nearest(cloud.points[i], 3 * sigma);
    ++total;
    close += k.has_value();
  }
  EXPECT_GE(static_cast<double>(close), 0.99 * static_cast<double>(total));
}

TEST(Render, SingleCellClosedForm) {
  const GlobalCloud cloud{{{0.55, 0.55}, {0.56, 0.57}, {0.58, 0.52}}, {{0, 0}, {0, 0}, {0, 0}}};
  const RasterFrame frame{0.1, 0, 0, 10, 10};
  const auto g = render_occupancy(cloud, frame, OccupancyConfig{});
  std::int64_t row = 0, col = 0;
  ASSERT_TRUE(frame.locate({0.55, 0.55}, row, col));
  EXPECT_EQ(col, 5);
  EXPECT_EQ(row, 4);
  EXPECT_DOUBLE_EQ(g.at(row, col), 1.0 / (1.0 + std::exp(-60.0 * 0.95)));
  EXPECT_NEAR(g.at(row, col), 1.0, 1e-20);
  EXPECT_DOUBLE_EQ(g.at(0, 0), 1.0 / (1.0 + std::exp(60.0 * 0.05)));
  EXPECT_NEAR(g.at(0, 0), 0.047, 5e-4);
}

TEST(Render, UniformCloudGivesEqualCells) {
  GlobalCloud cloud;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 15; ++j) {
      cloud.points.push_back({(i + 0.5) * 0.1, (j + 0.5) * 0.1});
      cloud.provenance.push_back({0, 0});
    }
  }
  const auto g = render_occupancy(cloud);
  EXPECT_EQ(g.frame.nx, 20);
  EXPECT_EQ(g.frame.ny, 15);
  for (double v : g.values) EXPECT_DOUBLE_EQ(v, g.values.front());
}

TEST(Render, EmptyCloudThrows) { EXPECT_THROW(render_occupancy(GlobalCloud{}), InputError); }

TEST(Render, ConfigValidated) {
  OccupancyConfig cfg;
  cfg.sigmoid_scale = 0;
  const GlobalCloud cloud{{{0, 0}}, {{0, 0}}};
  EXPECT_THROW(render_occupancy(cloud, cfg), ConfigError);
}

TEST(Render, RigidTranslationShiftsOrigin) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20);
  GlobalCloud a, b;
  for (int i = 0; i < 2000; ++i) {
    const Vec2 p{u(rng), u(rng) * 0.2};
    a.points.push_back(p);
    b.points.push_back(p + Vec2{12.5, -3.2});
    a.provenance.push_back({0, 0});
    b.provenance.push_back({0, 0});
  }
  const auto ga = render_occupancy(a), gb = render_occupancy(b);
  EXPECT_EQ(gb.frame.i0 - ga.frame.i0, 125);
  EXPECT_EQ(gb.frame.j0 - ga.frame.j0, -32);
  EXPECT_EQ(ga.frame.nx, gb.frame.nx);
  EXPECT_EQ(ga.frame.ny, gb.frame.ny);
  EXPECT_EQ(ga.counts, gb.counts);
  EXPECT_EQ(ga.values, gb.values);
}

TEST(Render, SigmoidPreservesCountOrder) {
  const auto& ds = small_fleet();
  const auto g = render_occupancy(aggregate(ds, noisy_poses(ds)));
  std::vector<std::size_t> idx(g.counts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return g.counts[x] < g.counts[y]; });
  for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_LE(g.values[idx[i - 1]], g.values[idx[i]]);
}

TEST(Render, AlignmentSharpensPostPeaks) {
  const auto& ds = small_fleet();
  const auto truth_cloud = aggregate(ds, truth_poses(ds));
  const auto noisy_cloud = aggregate(ds, noisy_poses(ds));
  const RasterFrame frame = frame_for({&truth_cloud, &noisy_cloud}, 0.1);
  const auto ht = histogram(truth_cloud, frame), hn = histogram(noisy_cloud, frame);
  auto peak_near = [&](const Histogram& h, Vec2 p) {
    std::uint32_t best = 0;
    for (double dx = -0.2; dx <= 0.2001; dx += 0.1) {
      for (double dy = -0.2; dy <= 0.2001; dy += 0.1) {
        std::int64_t r = 0, c = 0;
        if (frame.locate(p + Vec2{dx, dy}, r, c)) best = std::max(best, h.counts[static_cast<std::size_t>(r * frame.nx + c)]);
      }
    }
    return best;
  };
  double sum_t = 0, sum_n = 0;
  for (const auto& post : ds.scene.posts) {
    sum_t += peak_near(ht, post.pos);
    sum_n += peak_near(hn, post.pos);
  }
  EXPECT_GT(sum_t, sum_n);
}

TEST(LocalMaxima, PlateauAndIsolatedPeaks) {
  OccupancyGrid g;
  g.frame = {0.1, 0, 0, 12, 5};
  g.counts.assign(60, 0);
  g.values.assign(60, 0.0);
  auto set = [&](int r, int c, std::uint32_t v) { g.counts[static_cast<std::size_t>(r * 12 + c)] = v; };
  set(2, 2, 5);
  set(2, 3, 5);  // tie with (2, 2): only the first in raster order survives
  set(1, 9, 3);
  set(2, 9, 1);
  const auto peaks = local_maxima(g, 0.25);
  ASSERT_EQ(peaks.size(), 2u);
  EXPECT_NEAR(peaks[0].x, 0.95, 1e-12);
  EXPECT_NEAR(peaks[0].y, 0.35, 1e-12);
  EXPECT_NEAR(peaks[1].x, 0.25, 1e-12);
  EXPECT_NEAR(peaks[1].y, 0.25, 1e-12);
  EXPECT_EQ(local_maxima(g, 0.25, 4).size(), 1u);
}

TEST(Export, PgmAndWorldFile) {
  const GlobalCloud cloud{{{0.05, 0.05}, {0.25, 0.15}, {0.25, 0.15}}, {{0, 0}, {0, 0}, {0, 0}}};
  const auto g = render_occupancy(cloud);
  ASSERT_EQ(g.frame.nx, 3);
  ASSERT_EQ(g.frame.ny, 2);
  const fs::path dir = fs::temp_directory_path() / "radalign_occ_export";
  fs::create_directories(dir);
  write_pgm16(g, dir / "m.pgm");
  write_world_file(g.frame, dir / "m.pgw");
  const std::string pgm = slurp(dir / "m.pgm");
  const std::string header = "P5\n3 2\n65535\n";
  ASSERT_EQ(pgm.size(), header.size() + 12);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  auto sample = [&](int r, int c) {
    const auto* b = reinterpret_cast<const unsigned char*>(pgm.data() + header.size() + 2 * (r * 3 + c));
    return (b[0] << 8) | b[1];
  };
  // Row 0 is the northern row (y in [0.1, 0.2)), which holds the double hit.
  EXPECT_EQ(sample(0, 2), std::lround(g.at(0, 2) * 65535));
  EXPECT_EQ(sample(0, 2), 65535);
  EXPECT_EQ(sample(1, 0), std::lround(g.at(1, 0) * 65535));
  EXPECT_GT(g.at(1, 0), 0.9);
  EXPECT_EQ(sample(1, 1), std::lround(1.0 / (1.0 + std::exp(3.0)) * 65535));
  std::istringstream wf(slurp(dir / "m.pgw"));
  std::vector<double> w;
  for (double v; wf >> v;) w.push_back(v);
  ASSERT_EQ(w.size(), 6u);
  EXPECT_DOUBLE_EQ(w[0], 0.1);
  EXPECT_EQ(w[1], 0.0);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_DOUBLE_EQ(w[3], -0.1);
  EXPECT_NEAR(w[4], 0.05, 1e-12);
  EXPECT_NEAR(w[5], 0.15, 1e-12);
  fs::remove_all(dir);
}
