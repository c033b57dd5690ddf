#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "radalign/alignment.hpp"
#include "radalign/correlation.hpp"
#include "radalign/error.hpp"
#include "radalign/evaluation.hpp"
#include "radalign/icp.hpp"
#include "radalign/occupancy.hpp"
#include "radalign/pairs.hpp"
#include "radalign/pose_graph.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

inline constexpr int kSchemaVersion = 1;

struct FleetConfig {
  int drive_count = 5;
  // Template for generated drives; id, direction and rng_seed are assigned
  // per drive.
  DriveSpec drive;
  // Explicit drive list; when non-empty it replaces the generated one.
  std::vector<DriveSpec> drives;

  std::vector<DriveSpec> resolve() const {
    if (!drives.empty()) return drives;
    std::vector<DriveSpec> out = default_drive_specs(drive_count);
    for (auto& d : out) {
      DriveSpec t = drive;
      t.drive_id = d.drive_id;
      t.direction = d.direction;
      t.rng_seed = d.rng_seed;
      d = t;
    }
    return out;
  }
};

struct EvaluationConfig {
  MmeConfig mme;
  LateralConfig lateral{.step = 1.0, .merge_gap = 0.5};
};

struct PipelineConfig {
  std::string dataset_dir = "dataset";
  std::string output_dir = "output";
  std::uint64_t seed = 42;
  SceneSpec scene;
  FleetConfig fleet;
  SamplingConfig sampling;
  CorrelationConfig correlation;
  IcpConfig icp;
  SolverConfig solver;
  OccupancyConfig occupancy;
  EvaluationConfig evaluation;
  EdgeMethod method = EdgeMethod::grid;
  int workers = 1;
  bool write_cloud = false;

  void validate() const {
    scene.validate();
    if (fleet.drives.empty() && fleet.drive_count < 0) throw ConfigError("fleet.drive_count must be >= 0");
    std::set<std::string> ids;
    for (const auto& d : fleet.resolve()) {
      d.validate();
      if (!ids.insert(d.drive_id).second) throw ConfigError("duplicate drive id '" + d.drive_id + "'");
    }
    sampling.validate();
    correlation.validate();
    if (icp.max_iterations < 1) throw ConfigError("icp.max_iterations must be >= 1");
    if (!(icp.tolerance > 0)) throw ConfigError("icp.tolerance must be > 0");
    if (!(icp.max_correspondence_distance > 0)) throw ConfigError("icp.max_correspondence_distance must be > 0");
    solver.validate();
    occupancy.validate();
    evaluation.mme.validate();
    evaluation.lateral.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");
  }

  AlignmentOptions alignment_options() const { return {method, correlation, icp, workers}; }
};

namespace config_detail {

using Json = nlohmann::ordered_json;

inline Json drive_to_json(const DriveSpec& d) {
  return {{"drive_id", d.drive_id},
          {"direction", d.direction == Direction::forward ? "forward" : "reverse"},
          {"speed_min", d.speed_min},
          {"speed_max", d.speed_max},
          {"pose_rate", d.pose_rate},
          {"gnss_sigma_xy", d.gnss_sigma_xy},
          {"gnss_sigma_theta", d.gnss_sigma_theta},
          {"gnss_bias_walk_sigma", d.gnss_bias_walk_sigma},
          {"gnss_bias_limit", d.gnss_bias_limit},
          {"radar_range", d.radar_range},
          {"range_sigma", d.range_sigma},
          {"bearing_sigma", d.bearing_sigma},
          {"detection_probability", d.detection_probability},
          {"detection_sigma", d.detection_sigma},
          {"lane", d.lane},
          {"rng_seed", d.rng_seed}};
}

// Reads typed members of one JSON object and rejects members it never read.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown setting");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer() && !v->is_number_unsigned()) throw ConfigError(field(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_integer() && v->get<std::int64_t>() < 0) throw ConfigError(field(key) + ": must be >= 0");
      }
      out = v->get<Int>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_drive(const Json& j, const std::string& path, DriveSpec& d) {
  ObjectReader r(j, path);
  r.string("drive_id", d.drive_id);
  std::string dir = d.direction == Direction::forward ? "forward" : "reverse";
  r.string("direction", dir);
  if (dir == "forward") d.direction = Direction::forward;
  else if (dir == "reverse") d.direction = Direction::reverse;
  else throw ConfigError(r.field("direction") + ": expected 'forward' or 'reverse'");
  r.number("speed_min", d.speed_min);
  r.number("speed_max", d.speed_max);
  r.number("pose_rate", d.pose_rate);
  r.number("gnss_sigma_xy", d.gnss_sigma_xy);
  r.number("gnss_sigma_theta", d.gnss_sigma_theta);
  r.number("gnss_bias_walk_sigma", d.gnss_bias_walk_sigma);
  r.number("gnss_bias_limit", d.gnss_bias_limit);
  r.number("radar_range", d.radar_range);
  r.number("range_sigma", d.range_sigma);
  r.number("bearing_sigma", d.bearing_sigma);
  r.number("detection_probability", d.detection_probability);
  r.number("detection_sigma", d.detection_sigma);
  r.integer("lane", d.lane);
  r.integer("rng_seed", d.rng_seed);
}

}  // namespace config_detail

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  using config_detail::Json;
  Json drives = Json::array();
  for (const auto& d : c.fleet.drives) drives.push_back(config_detail::drive_to_json(d));
  Json drive = config_detail::drive_to_json(c.fleet.drive);
  drive.erase("drive_id");
  drive.erase("direction");
  drive.erase("rng_seed");
  const auto& w = c.correlation.window;
  const auto& s = c.solver;
  const auto& l = c.evaluation.lateral;
  return {{"schema_version", kSchemaVersion},
          {"paths", {{"dataset", c.dataset_dir}, {"output", c.output_dir}}},
          {"seed", c.seed},
          {"scene",
           {{"corridor_length", c.scene.corridor_length},
            {"lane_count", c.scene.lane_count},
            {"lane_width", c.scene.lane_width},
            {"guardrail_post_spacing", c.scene.guardrail_post_spacing},
            {"reflector_jitter", c.scene.reflector_jitter},
            {"ghost_reflection_enabled", c.scene.ghost_reflection_enabled},
            {"landmark_spacing", c.scene.landmark_spacing},
            {"median_gap", c.scene.median_gap},
            {"shoulder_width", c.scene.shoulder_width}}},
          {"fleet", {{"drive_count", c.fleet.drive_count}, {"drive", std::move(drive)}, {"drives", std::move(drives)}}},
          {"sampling", {{"max_distance", c.sampling.max_distance}, {"rate", c.sampling.rate}, {"seed", c.sampling.seed}}},
          {"correlation",
           {{"cell_size", c.correlation.cell_size},
            {"point_variance", c.correlation.point_variance},
            {"eps_r", w.eps_r},
            {"eps_l", w.eps_l},
            {"step_r", w.step_r},
            {"step_l", w.step_l}}},
          {"icp",
           {{"max_iterations", c.icp.max_iterations},
            {"tolerance", c.icp.tolerance},
            {"max_correspondence_distance", c.icp.max_correspondence_distance}}},
          {"solver",
           {{"max_iterations", s.max_iterations},
            {"lambda_init", s.lambda_init},
            {"lambda_factor", s.lambda_factor},
            {"rel_error_tol", s.rel_error_tol},
            {"abs_error_tol", s.abs_error_tol},
            {"huber_k", s.huber_k},
            {"robust", s.robust},
            {"z_weight_constant", s.z_weight_constant},
            {"z_min", s.z_min},
            {"rotation_per_meter", s.rotation_per_meter},
            {"icp_sigma_xy", s.icp_sigma_xy},
            {"icp_sigma_theta", s.icp_sigma_theta},
            {"min_prior_sigma", s.min_prior_sigma},
            {"linear_solver", s.solver == LinearSolver::sparse ? "sparse" : "dense"}}},
          {"occupancy",
           {{"cell_size", c.occupancy.cell_size},
            {"sigmoid_shift", c.occupancy.sigmoid_shift},
            {"sigmoid_scale", c.occupancy.sigmoid_scale},
            {"write_cloud", c.write_cloud}}},
          {"evaluation",
           {{"mme", {{"radius", c.evaluation.mme.radius}, {"min_neighbors", c.evaluation.mme.min_neighbors}}},
            {"step", l.step},
            {"max_lateral", l.max_lateral},
            {"association_gate", l.association_gate},
            {"merge_gap", l.merge_gap}}},
          {"method", std::string(to_string(c.method))},
          {"workers", c.workers}};
}

// Strict reader: every member must be known and correctly typed. Missing
// members keep their defaults.
inline PipelineConfig config_from_json(const nlohmann::ordered_json& j) {
  using config_detail::ObjectReader;
  PipelineConfig c;
  ObjectReader root(j, "");
  int version = 0;
  root.integer("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("schema_version: expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(version));
  }
  if (const auto* p = root.find("paths")) {
    ObjectReader r(*p, "paths");
    r.string("dataset", c.dataset_dir);
    r.string("output", c.output_dir);
  }
  root.integer("seed", c.seed);
  if (const auto* p = root.find("scene")) {
    ObjectReader r(*p, "scene");
    r.number("corridor_length", c.scene.corridor_length);
    r.integer("lane_count", c.scene.lane_count);
    r.number("lane_width", c.scene.lane_width);
    r.number("guardrail_post_spacing", c.scene.guardrail_post_spacing);
    r.number("reflector_jitter", c.scene.reflector_jitter);
    r.boolean("ghost_reflection_enabled", c.scene.ghost_reflection_enabled);
    r.number("landmark_spacing", c.scene.landmark_spacing);
    r.number("median_gap", c.scene.median_gap);
    r.number("shoulder_width", c.scene.shoulder_width);
  }
  if (const auto* p = root.find("fleet")) {
    ObjectReader r(*p, "fleet");
    r.integer("drive_count", c.fleet.drive_count);
    if (const auto* d = r.find("drive")) config_detail::read_drive(*d, "fleet.drive", c.fleet.drive);
    if (const auto* list = r.find("drives")) {
      if (!list->is_array()) throw ConfigError("fleet.drives: expected an array");
      for (std::size_t i = 0; i < list->size(); ++i) {
        DriveSpec d;
        d.drive_id = "d" + std::to_string(i);
        d.rng_seed = i + 1;
        config_detail::read_drive((*list)[i], "fleet.drives[" + std::to_string(i) + "]", d);
        c.fleet.drives.push_back(d);
      }
    }
  }
  if (const auto* p = root.find("sampling")) {
    ObjectReader r(*p, "sampling");
    r.number("max_distance", c.sampling.max_distance);
    r.number("rate", c.sampling.rate);
    r.integer("seed", c.sampling.seed);
  }
  if (const auto* p = root.find("correlation")) {
    ObjectReader r(*p, "correlation");
    r.number("cell_size", c.correlation.cell_size);
    r.number("point_variance", c.correlation.point_variance);
    r.number("eps_r", c.correlation.window.eps_r);
    r.number("eps_l", c.correlation.window.eps_l);
    r.number("step_r", c.correlation.window.step_r);
    r.number("step_l", c.correlation.window.step_l);
  }
  if (const auto* p = root.find("icp")) {
    ObjectReader r(*p, "icp");
    r.integer("max_iterations", c.icp.max_iterations);
    r.number("tolerance", c.icp.tolerance);
    r.number("max_correspondence_distance", c.icp.max_correspondence_distance);
  }
  if (const auto* p = root.find("solver")) {
    ObjectReader r(*p, "solver");
    auto& s = c.solver;
    r.integer("max_iterations", s.max_iterations);
    r.number("lambda_init", s.lambda_init);
    r.number("lambda_factor", s.lambda_factor);
    r.number("rel_error_tol", s.rel_error_tol);
    r.number("abs_error_tol", s.abs_error_tol);
    r.number("huber_k", s.huber_k);
    r.boolean("robust", s.robust);
    r.number("z_weight_constant", s.z_weight_constant);
    r.number("z_min", s.z_min);
    r.number("rotation_per_meter", s.rotation_per_meter);
    r.number("icp_sigma_xy", s.icp_sigma_xy);
    r.number("icp_sigma_theta", s.icp_sigma_theta);
    r.number("min_prior_sigma", s.min_prior_sigma);
    std::string solver = s.solver == LinearSolver::sparse ? "sparse" : "dense";
    r.string("linear_solver", solver);
    if (solver == "sparse") s.solver = LinearSolver::sparse;
    else if (solver == "dense") s.solver = LinearSolver::dense;
    else throw ConfigError("solver.linear_solver: expected 'sparse' or 'dense'");
  }
  if (const auto* p = root.find("occupancy")) {
    ObjectReader r(*p, "occupancy");
    r.number("cell_size", c.occupancy.cell_size);
    r.number("sigmoid_shift", c.occupancy.sigmoid_shift);
    r.number("sigmoid_scale", c.occupancy.sigmoid_scale);
    r.boolean("write_cloud", c.write_cloud);
  }
  if (const auto* p = root.find("evaluation")) {
    ObjectReader r(*p, "evaluation");
    if (const auto* m = r.find("mme")) {
      ObjectReader mr(*m, "evaluation.mme");
      mr.number("radius", c.evaluation.mme.radius);
      mr.integer("min_neighbors", c.evaluation.mme.min_neighbors);
    }
    r.number("step", c.evaluation.lateral.step);
    r.number("max_lateral", c.evaluation.lateral.max_lateral);
    r.number("association_gate", c.evaluation.lateral.association_gate);
    r.number("merge_gap", c.evaluation.lateral.merge_gap);
  }
  std::string method(to_string(c.method));
  root.string("method", method);
  c.method = edge_method_from_string(method);
  root.integer("workers", c.workers);
  return c;
}

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and taken as a plain string otherwise. Array elements are
// addressed by index.
inline void apply_override(nlohmann::ordered_json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::ordered_json value;
  try {
    value = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::ordered_json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = parse_index(part);
      } catch (const InputError&) {
        throw ConfigError("--set " + key + ": '" + part + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError("--set " + key + ": index out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = nlohmann::ordered_json::object();
      if (!node->is_object()) throw ConfigError("--set " + key + ": '" + part + "' is not inside an object");
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

inline PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                                  const std::vector<std::string>& overrides) {
  nlohmann::ordered_json doc = config_to_json(PipelineConfig{});
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    nlohmann::ordered_json user;
    try {
      user = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
    if (!user.is_object()) throw ConfigError(file->string() + ": expected a JSON object");
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  PipelineConfig c = config_from_json(doc);
  c.validate();
  return c;
}

}  // namespace radalign
