#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "radalign/error.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

// On-disk layout: <dir>/scene.json plus one <dir>/drive_<id>.jsonl per drive,
// one JSON object per pose record.
namespace dataset_io {

using Json = nlohmann::ordered_json;

inline Json to_json(Vec2 p) { return Json::array({p.x, p.y}); }

inline Json to_json(const Polyline& pl) {
  Json pts = Json::array();
  for (const auto& p : pl.pts) pts.push_back(to_json(p));
  return Json{{"class", std::string(to_string(pl.cls))}, {"pts", std::move(pts)}};
}

inline Json scene_to_json(const Scene& scene, const std::vector<std::string>& drive_ids) {
  const SceneSpec& s = scene.spec;
  Json posts = Json::array();
  for (const auto& p : scene.posts) {
    const char* rail = p.rail == Rail::median ? "median" : (p.rail == Rail::left_edge ? "left_edge" : "right_edge");
    posts.push_back(Json{{"rail", rail}, {"nominal", to_json(p.nominal)}, {"pos", to_json(p.pos)}});
  }
  Json landmarks = Json::array();
  for (const auto& l : scene.landmarks) landmarks.push_back(to_json(l));
  Json lines = Json::array();
  for (const auto& pl : scene.gt_polylines) lines.push_back(to_json(pl));
  return Json{{"corridor_length", s.corridor_length},
              {"lane_count", s.lane_count},
              {"lane_width", s.lane_width},
              {"guardrail_post_spacing", s.guardrail_post_spacing},
              {"reflector_jitter", s.reflector_jitter},
              {"ghost_reflection_enabled", s.ghost_reflection_enabled},
              {"landmark_spacing", s.landmark_spacing},
              {"median_gap", s.median_gap},
              {"shoulder_width", s.shoulder_width},
              {"seed", scene.seed},
              {"drives", drive_ids},
              {"posts", std::move(posts)},
              {"landmarks", std::move(landmarks)},
              {"gt_polylines", std::move(lines)}};
}

inline Json record_to_json(const PoseRecord& r) {
  Json scan = Json::array();
  for (const auto& p : r.scan) scan.push_back(to_json(p));
  Json dets = Json::array();
  for (const auto& d : r.detections) dets.push_back(to_json(d));
  return Json{{"t", r.t},
              {"truth", Json::array({r.truth.x, r.truth.y, r.truth.theta})},
              {"noisy", Json::array({r.noisy.x, r.noisy.y, r.noisy.theta})},
              {"sigma", Json::array({r.noisy.sigma_xy, r.noisy.sigma_theta})},
              {"scan", std::move(scan)},
              {"detections", std::move(dets)}};
}

// Field-aware readers; every failure carries file, line and field name.
class Reader {
 public:
  Reader(std::string file, std::size_t line) : file_(std::move(file)), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(file_, line_, field, what);
  }

  const Json& member(const Json& obj, const std::string& field) const {
    if (!obj.is_object()) fail(field, "expected an object");
    auto it = obj.find(field);
    if (it == obj.end()) fail(field, "missing");
    return *it;
  }

  double number(const Json& j, const std::string& field) const {
    if (!j.is_number()) fail(field, "expected a number");
    return j.get<double>();
  }

  std::vector<double> numbers(const Json& j, const std::string& field, std::size_t n) const {
    if (!j.is_array() || j.size() != n) fail(field, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number(v, field));
    return out;
  }

  Vec2 point(const Json& j, const std::string& field) const {
    const auto v = numbers(j, field, 2);
    return {v[0], v[1]};
  }

  std::vector<Vec2> points(const Json& j, const std::string& field) const {
    if (!j.is_array()) fail(field, "expected an array of points");
    std::vector<Vec2> out;
    out.reserve(j.size());
    for (const auto& p : j) out.push_back(point(p, field));
    return out;
  }

  Polyline polyline(const Json& j, const std::string& field) const {
    const Json& cls = member(j, "class");
    if (!cls.is_string()) fail(field + ".class", "expected a string");
    Polyline pl;
    try {
      pl.cls = lane_class_from_string(cls.get<std::string>());
    } catch (const InputError& e) {
      fail(field + ".class", e.what());
    }
    pl.pts = points(member(j, "pts"), field + ".pts");
    return pl;
  }

 private:
  std::string file_;
  std::size_t line_;
};

inline Json parse_json(const std::string& text, const std::string& file, std::size_t line) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(file, line, "<json>", e.what());
  }
}

}  // namespace dataset_io

inline void write_drive(const DriveData& drive, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& r : drive.records) out << dataset_io::record_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

inline std::filesystem::path drive_file(const std::filesystem::path& dir, const std::string& drive_id) {
  return dir / ("drive_" + drive_id + ".jsonl");
}

inline void write_dataset(const FleetDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::string> ids;
  for (const auto& d : ds.drives) ids.push_back(d.drive_id);
  {
    std::ofstream out(dir / "scene.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "scene.json").string());
    out << dataset_io::scene_to_json(ds.scene, ids).dump(1) << '\n';
  }
  for (const auto& d : ds.drives) write_drive(d, drive_file(dir, d.drive_id));
}

inline DriveData read_drive(const std::filesystem::path& file, const std::string& drive_id) {
  using dataset_io::Reader;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  DriveData drive;
  drive.drive_id = drive_id;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    const Reader rd(file.string(), line_no);
    const auto j = dataset_io::parse_json(text, file.string(), line_no);
    PoseRecord r;
    r.t = rd.number(rd.member(j, "t"), "t");
    if (!drive.records.empty() && !(r.t > drive.records.back().t)) {
      rd.fail("t", "timestamp not strictly increasing");
    }
    const auto truth = rd.numbers(rd.member(j, "truth"), "truth", 3);
    const auto noisy = rd.numbers(rd.member(j, "noisy"), "noisy", 3);
    const auto sigma = rd.numbers(rd.member(j, "sigma"), "sigma", 2);
    if (sigma[0] < 0 || sigma[1] < 0) rd.fail("sigma", "standard deviations must be >= 0");
    r.truth = {truth[0], truth[1], truth[2], sigma[0], sigma[1]};
    r.noisy = {noisy[0], noisy[1], noisy[2], sigma[0], sigma[1]};
    r.scan = rd.points(rd.member(j, "scan"), "scan");
    const auto& dets = rd.member(j, "detections");
    if (!dets.is_array()) rd.fail("detections", "expected an array");
    for (const auto& d : dets) r.detections.push_back(rd.polyline(d, "detections"));
    drive.records.push_back(std::move(r));
  }
  return drive;
}

inline FleetDataset read_dataset(const std::filesystem::path& dir) {
  using dataset_io::Reader;
  const auto scene_path = dir / "scene.json";
  std::ifstream in(scene_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + scene_path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto j = dataset_io::parse_json(text, scene_path.string(), 1);
  const Reader rd(scene_path.string(), 1);

  FleetDataset ds;
  SceneSpec& s = ds.scene.spec;
  s.corridor_length = rd.number(rd.member(j, "corridor_length"), "corridor_length");
  s.lane_count = static_cast<int>(rd.number(rd.member(j, "lane_count"), "lane_count"));
  s.lane_width = rd.number(rd.member(j, "lane_width"), "lane_width");
  s.guardrail_post_spacing = rd.number(rd.member(j, "guardrail_post_spacing"), "guardrail_post_spacing");
  s.reflector_jitter = rd.number(rd.member(j, "reflector_jitter"), "reflector_jitter");
  const auto& ghost = rd.member(j, "ghost_reflection_enabled");
  if (!ghost.is_boolean()) rd.fail("ghost_reflection_enabled", "expected a boolean");
  s.ghost_reflection_enabled = ghost.get<bool>();
  s.landmark_spacing = rd.number(rd.member(j, "landmark_spacing"), "landmark_spacing");
  s.median_gap = rd.number(rd.member(j, "median_gap"), "median_gap");
  s.shoulder_width = rd.number(rd.member(j, "shoulder_width"), "shoulder_width");
  const auto& seed = rd.member(j, "seed");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) rd.fail("seed", "expected an integer");
  ds.scene.seed = seed.get<std::uint64_t>();

  for (const auto& p : rd.member(j, "posts")) {
    Post post;
    const auto& rail = rd.member(p, "rail");
    const std::string r = rail.is_string() ? rail.get<std::string>() : "";
    if (r == "median") post.rail = Rail::median;
    else if (r == "left_edge") post.rail = Rail::left_edge;
    else if (r == "right_edge") post.rail = Rail::right_edge;
    else rd.fail("posts.rail", "unknown rail '" + r + "'");
    post.nominal = rd.point(rd.member(p, "nominal"), "posts.nominal");
    post.pos = rd.point(rd.member(p, "pos"), "posts.pos");
    ds.scene.posts.push_back(post);
  }
  ds.scene.landmarks = rd.points(rd.member(j, "landmarks"), "landmarks");
  for (const auto& pl : rd.member(j, "gt_polylines")) ds.scene.gt_polylines.push_back(rd.polyline(pl, "gt_polylines"));

  const auto& ids = rd.member(j, "drives");
  if (!ids.is_array()) rd.fail("drives", "expected an array of drive ids");
  for (const auto& id : ids) {
    if (!id.is_string()) rd.fail("drives", "expected string drive ids");
    const auto drive_id = id.get<std::string>();
    ds.drives.push_back(read_drive(drive_file(dir, drive_id), drive_id));
  }
  return ds;
}

}  // namespace radalign
