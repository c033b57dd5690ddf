#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "radalign/config.hpp"

using namespace radalign;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::vector<std::string>& sets) {
  try {
    load_config(std::nullopt, sets);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAreValidAndRoundTrip) {
  const PipelineConfig c = load_config(std::nullopt, {});
  const auto j = config_to_json(c);
  EXPECT_EQ(j["schema_version"], kSchemaVersion);
  EXPECT_EQ(config_to_json(config_from_json(j)).dump(), j.dump());
  EXPECT_EQ(c.fleet.resolve().size(), 5u);
  EXPECT_EQ(c.method, EdgeMethod::grid);
  EXPECT_EQ(c.workers, 1);
}

TEST(Config, OverridesApplyByDottedPath) {
  const auto c = load_config(std::nullopt, {"solver.huber_k=2.5", "method=icp", "fleet.drive.gnss_sigma_xy=0.3",
                                            "paths.output=out dir", "scene.ghost_reflection_enabled=true"});
  EXPECT_EQ(c.solver.huber_k, 2.5);
  EXPECT_EQ(c.method, EdgeMethod::icp);
  EXPECT_EQ(c.output_dir, "out dir");
  EXPECT_TRUE(c.scene.ghost_reflection_enabled);
  for (const auto& d : c.fleet.resolve()) EXPECT_EQ(d.gnss_sigma_xy, 0.3);
}

TEST(Config, FileMergesOverDefaults) {
  const fs::path file = fs::temp_directory_path() / "radalign_cfg_test.json";
  {
    std::ofstream out(file);
    out << R"({"schema_version": 1, "seed": 9, "fleet": {"drives": [{"drive_id": "a"}, {"drive_id": "b", "direction": "reverse"}]}})";
  }
  const auto c = load_config(file, {"fleet.drives.1.lane=1"});
  EXPECT_EQ(c.seed, 9u);
  const auto drives = c.fleet.resolve();
  ASSERT_EQ(drives.size(), 2u);
  EXPECT_EQ(drives[0].drive_id, "a");
  EXPECT_EQ(drives[1].direction, Direction::reverse);
  EXPECT_EQ(drives[1].lane, 1);
  EXPECT_EQ(c.correlation.window.eps_l, 2.0);
  fs::remove(file);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_error({"solver.hubr_k=2"}).find("solver.hubr_k"), std::string::npos);
  EXPECT_NE(config_error({"solver.huber_k=\"big\""}).find("solver.huber_k"), std::string::npos);
  EXPECT_NE(config_error({"fleet.drive.gnss_sigma_xy=-1"}).find("gnss_sigma_xy"), std::string::npos);
  EXPECT_NE(config_error({"sampling.rate=0"}).find("sampling.rate"), std::string::npos);
  EXPECT_NE(config_error({"workers=0"}).find("workers"), std::string::npos);
  EXPECT_NE(config_error({"schema_version=2"}).find("schema_version"), std::string::npos);
  EXPECT_NE(config_error({"method=ndt"}).find("method"), std::string::npos);
  EXPECT_NE(config_error({"correlation.eps_l=0.25"}).find("eps_l"), std::string::npos);
  EXPECT_FALSE(config_error({"no_equals_sign"}).empty());
  EXPECT_FALSE(config_error({"fleet.drives.3.lane=1"}).empty());
}

TEST(Config, DuplicateDriveIdsRejected) {
  EXPECT_NE(config_error({R"(fleet.drives=[{"drive_id":"x"},{"drive_id":"x"}])"}).find("duplicate"), std::string::npos);
}

TEST(Config, MissingOrMalformedFile) {
  EXPECT_THROW(load_config(fs::path("/nonexistent/radalign.json"), {}), ConfigError);
  const fs::path file = fs::temp_directory_path() / "radalign_cfg_bad.json";
  {
    std::ofstream out(file);
    out << "{ not json";
  }
  EXPECT_THROW(load_config(file, {}), ConfigError);
  fs::remove(file);
}
