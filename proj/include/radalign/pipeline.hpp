#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "radalign/alignment.hpp"
#include "radalign/config.hpp"
#include "radalign/dataset_io.hpp"
#include "radalign/evaluation.hpp"
#include "radalign/occupancy.hpp"
#include "radalign/pairs.hpp"
#include "radalign/pose_graph.hpp"
#include "radalign/synthetic.hpp"
#include "radalign/worker_pool.hpp"

namespace radalign {

namespace fs = std::filesystem;

// File names inside the output directory.
namespace artifact {
inline constexpr const char* pairs = "pairs.csv";
inline constexpr const char* edges = "edges.csv";
inline constexpr const char* aligned_poses = "aligned_poses.csv";
inline constexpr const char* report = "optimization_report.json";
inline constexpr const char* map_aligned = "occupancy_aligned";
inline constexpr const char* map_unaligned = "occupancy_unaligned";
inline constexpr const char* cloud = "aligned_cloud.csv";
inline constexpr const char* metrics = "metrics.json";
inline constexpr const char* lateral_series = "lateral_series.csv";
}  // namespace artifact

namespace pipeline_detail {

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline void require_file(const fs::path& file, const std::string& hint) {
  if (!fs::is_regular_file(file)) throw InputError("missing input " + file.string() + " (" + hint + ")");
}

inline void write_json(const nlohmann::ordered_json& j, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace pipeline_detail

inline FleetDataset generate_dataset(const PipelineConfig& cfg) {
  cfg.validate();
  FleetDataset ds;
  ds.scene = generate_scene(cfg.scene, cfg.seed);
  const auto specs = cfg.fleet.resolve();
  ds.drives.resize(specs.size());
  parallel_for(specs.size(), cfg.workers,
               [&](std::size_t i) { ds.drives[i] = simulate_drive(ds.scene, with_fleet_seed(specs[i], cfg.seed)); });
  return ds;
}

inline FleetDataset run_generate(const PipelineConfig& cfg) {
  FleetDataset ds = generate_dataset(cfg);
  write_dataset(ds, cfg.dataset_dir);
  return ds;
}

inline FleetDataset load_dataset(const PipelineConfig& cfg) {
  pipeline_detail::require_file(fs::path(cfg.dataset_dir) / "scene.json", "run 'generate' first");
  return read_dataset(cfg.dataset_dir);
}

struct AlignOutcome {
  std::vector<PairCandidate> pairs;
  std::vector<CorrelationResult> edges;
  PoseGraphProblem graph;
  OptimizationResult result;
  bool reused_edges = false;
};

// Pair sampling, registration and pose-graph optimisation. With `resume`
// an existing edges file is reused instead of registering the pairs again.
inline AlignOutcome align_dataset(const FleetDataset& ds, const PipelineConfig& cfg, bool resume = false,
                                  const fs::path& edges_file = {}) {
  cfg.validate();
  AlignOutcome out;
  out.pairs = sample_pairs(ds, cfg.sampling);
  if (resume && !edges_file.empty() && fs::is_regular_file(edges_file)) {
    out.edges = read_edges_csv(ds, edges_file);
    out.reused_edges = true;
  } else {
    out.edges = compute_edges(ds, out.pairs, cfg.alignment_options());
  }
  out.graph = build_graph(ds, out.edges, cfg.solver, cfg.method);
  out.result = optimize(out.graph, cfg.solver);
  return out;
}

inline AlignOutcome run_align(const PipelineConfig& cfg, bool resume = false) {
  const FleetDataset ds = load_dataset(cfg);
  const fs::path dir = cfg.output_dir;
  pipeline_detail::ensure_dir(dir);
  AlignOutcome out = align_dataset(ds, cfg, resume, dir / artifact::edges);
  write_pairs_csv(ds, out.pairs, dir / artifact::pairs);
  if (!out.reused_edges) write_edges_csv(ds, out.edges, dir / artifact::edges);
  write_poses_csv(ds, out.result.poses, dir / artifact::aligned_poses);
  pipeline_detail::write_json(report_to_json(out.result.report, out.graph, cfg.method), dir / artifact::report);
  return out;
}

inline std::vector<Pose2> load_aligned_poses(const FleetDataset& ds, const PipelineConfig& cfg) {
  const fs::path file = fs::path(cfg.output_dir) / artifact::aligned_poses;
  pipeline_detail::require_file(file, "run 'align' first");
  return read_poses_csv(ds, file);
}

struct MapOutcome {
  OccupancyGrid aligned;
  OccupancyGrid unaligned;
};

// Both maps share one frame so they can be overlaid pixel for pixel.
inline MapOutcome build_maps(const FleetDataset& ds, const std::vector<Pose2>& aligned, const OccupancyConfig& cfg) {
  const GlobalCloud a = aggregate(ds, aligned);
  const GlobalCloud u = aggregate(ds, noisy_poses(ds));
  if (a.empty()) throw InputError("occupancy: dataset has no scan points");
  const RasterFrame frame = frame_for({&a, &u}, cfg.cell_size);
  return {render_occupancy(a, frame, cfg), render_occupancy(u, frame, cfg)};
}

inline MapOutcome run_map(const PipelineConfig& cfg) {
  cfg.validate();
  const FleetDataset ds = load_dataset(cfg);
  const auto poses = load_aligned_poses(ds, cfg);
  const fs::path dir = cfg.output_dir;
  MapOutcome m = build_maps(ds, poses, cfg.occupancy);
  write_pgm16(m.aligned, dir / (std::string(artifact::map_aligned) + ".pgm"));
  write_world_file(m.aligned.frame, dir / (std::string(artifact::map_aligned) + ".pgw"));
  write_pgm16(m.unaligned, dir / (std::string(artifact::map_unaligned) + ".pgm"));
  write_world_file(m.unaligned.frame, dir / (std::string(artifact::map_unaligned) + ".pgw"));
  if (cfg.write_cloud) write_cloud_csv(ds, aggregate(ds, poses), dir / artifact::cloud);
  return m;
}

struct EvalOutcome {
  MmeResult mme_aligned;
  MmeResult mme_unaligned;
  PoseRmse rmse_aligned;
  PoseRmse rmse_unaligned;
  LateralErrorReport lateral;
  LateralErrorReport lateral_unaligned;
};

inline EvalOutcome evaluate(const FleetDataset& ds, const std::vector<Pose2>& aligned, const EvaluationConfig& cfg) {
  EvalOutcome e;
  const auto noisy = noisy_poses(ds);
  const auto truth = truth_poses(ds);
  e.mme_aligned = mean_map_entropy(aggregate(ds, aligned), cfg.mme);
  e.mme_unaligned = mean_map_entropy(aggregate(ds, noisy), cfg.mme);
  e.rmse_aligned = pose_rmse(aligned, truth);
  e.rmse_unaligned = pose_rmse(noisy, truth);
  const Polyline ref = ds.scene.centerline();
  e.lateral = lateral_errors(world_detections(ds, aligned), ds.scene.gt_polylines, ref, cfg.lateral);
  e.lateral_unaligned = lateral_errors(world_detections(ds, noisy), ds.scene.gt_polylines, ref, cfg.lateral);
  return e;
}

inline nlohmann::ordered_json metrics_to_json(const EvalOutcome& e) {
  auto mme = [](const MmeResult& m) {
    return nlohmann::ordered_json{{"value", m.value}, {"valid_points", m.valid_points}, {"skipped_points", m.skipped_points}};
  };
  auto rmse = [](const PoseRmse& r) { return nlohmann::ordered_json{{"trans", r.trans}, {"rot", r.rot}}; };
  auto lateral = [](const LateralErrorReport& r) {
    auto j = to_json(r);
    j.erase("series");
    return j;
  };
  return {{"mme_aligned", mme(e.mme_aligned)},
          {"mme_unaligned", mme(e.mme_unaligned)},
          {"pose_rmse", rmse(e.rmse_aligned)},
          {"pose_rmse_unaligned", rmse(e.rmse_unaligned)},
          {"lateral", lateral(e.lateral)},
          {"lateral_unaligned", lateral(e.lateral_unaligned)}};
}

inline void write_lateral_series(const LateralErrorReport& r, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "s,associations,offset,non_offset\n";
  for (const auto& st : r.series) {
    out << format_double(st.s) << ',' << st.associations << ',' << format_double(st.offset) << ','
        << format_double(st.non_offset) << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

inline EvalOutcome run_eval(const PipelineConfig& cfg) {
  cfg.validate();
  const FleetDataset ds = load_dataset(cfg);
  const auto poses = load_aligned_poses(ds, cfg);
  const fs::path dir = cfg.output_dir;
  EvalOutcome e = evaluate(ds, poses, cfg.evaluation);
  pipeline_detail::write_json(metrics_to_json(e), dir / artifact::metrics);
  write_lateral_series(e.lateral, dir / artifact::lateral_series);
  return e;
}

}  // namespace radalign
