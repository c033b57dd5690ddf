#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "radalign/correlation.hpp"
#include "radalign/error.hpp"
#include "radalign/format.hpp"
#include "radalign/icp.hpp"
#include "radalign/pairs.hpp"
#include "radalign/pose_graph.hpp"
#include "radalign/synthetic.hpp"
#include "radalign/worker_pool.hpp"

namespace radalign {

struct AlignmentOptions {
  EdgeMethod method = EdgeMethod::grid;
  CorrelationConfig correlation;
  IcpConfig icp;
  int workers = 1;
};

// Registers scan b onto scan a, seeded by the noisy relative pose. Failures
// that only invalidate this pair come back as flagged results.
inline CorrelationResult register_pair(const FleetDataset& ds, const PairCandidate& pair,
                                       const AlignmentOptions& opt) {
  const auto& ra = ds.drives[pair.a.drive].records[pair.a.index];
  const auto& rb = ds.drives[pair.b.drive].records[pair.b.index];
  const Transform2 guess = relative_transform(ra.noisy, rb.noisy);
  CorrelationResult res;
  res.pair = pair;
  res.transform = guess;
  res.flag = EdgeFlag::degenerate;
  if (opt.method == EdgeMethod::grid) {
    if (ra.scan.empty() || rb.scan.empty()) return res;
    try {
      res = correlate(ra.scan, rb.scan, guess, opt.correlation).result;
      res.pair = pair;
    } catch (const DegenerateCorrelationError&) {
    }
    return res;
  }
  if (ra.scan.size() < 3 || rb.scan.size() < 3) return res;
  const IcpResult icp = icp_baseline(ra.scan, rb.scan, guess, opt.icp);
  res.transform = icp.transform;
  res.flag = icp.converged ? EdgeFlag::ok : EdgeFlag::not_converged;
  return res;
}

inline std::vector<CorrelationResult> compute_edges(const FleetDataset& ds, const std::vector<PairCandidate>& pairs,
                                                    const AlignmentOptions& opt) {
  if (opt.method == EdgeMethod::grid) opt.correlation.validate();
  std::vector<CorrelationResult> out(pairs.size());
  parallel_for(pairs.size(), opt.workers, [&](std::size_t i) { out[i] = register_pair(ds, pairs[i], opt); });
  return out;
}

namespace detail {

inline std::map<std::string, std::size_t> drive_lookup(const FleetDataset& ds) {
  std::map<std::string, std::size_t> m;
  for (std::size_t d = 0; d < ds.drives.size(); ++d) m[ds.drives[d].drive_id] = d;
  return m;
}

inline std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  return in;
}

}  // namespace detail

inline constexpr const char* kEdgesHeader = "drive_a,idx_a,drive_b,idx_b,dx,dy,dtheta,peak,z,flag";

inline void write_edges_csv(const FleetDataset& ds, const std::vector<CorrelationResult>& edges,
                            const std::filesystem::path& file) {
  auto out = detail::open_output(file);
  out << kEdgesHeader << '\n';
  for (const auto& e : edges) {
    out << ds.drives[e.pair.a.drive].drive_id << ',' << e.pair.a.index << ',' << ds.drives[e.pair.b.drive].drive_id
        << ',' << e.pair.b.index << ',' << format_double(e.transform.dx) << ',' << format_double(e.transform.dy) << ','
        << format_double(e.transform.dtheta) << ',' << format_double(e.peak) << ',' << format_double(e.z_score) << ','
        << to_string(e.flag) << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

inline std::vector<CorrelationResult> read_edges_csv(const FleetDataset& ds, const std::filesystem::path& file) {
  auto in = detail::open_input(file);
  const auto drives = detail::drive_lookup(ds);
  std::vector<CorrelationResult> edges;
  std::string line;
  std::size_t line_no = 0;
  static constexpr const char* fields[] = {"drive_a", "idx_a", "drive_b", "idx_b", "dx",
                                           "dy",      "dtheta", "peak",   "z",     "flag"};
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kEdgesHeader) throw ParseError(file.string(), 1, "<header>", "unexpected edges header");
      continue;
    }
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 10) throw ParseError(file.string(), line_no, "<row>", "expected 10 columns");
    std::size_t col = 0;
    try {
      auto pose = [&](std::string_view id, std::string_view idx) {
        const auto it = drives.find(std::string(id));
        if (it == drives.end()) throw InputError("unknown drive '" + std::string(id) + "'");
        ++col;
        const std::size_t index = parse_index(idx);
        if (index >= ds.drives[it->second].records.size()) throw InputError("pose index out of range");
        ++col;
        return PoseKey{it->second, index};
      };
      CorrelationResult e;
      e.pair.a = pose(cols[0], cols[1]);
      e.pair.b = pose(cols[2], cols[3]);
      e.pair.kind = (e.pair.a.drive == e.pair.b.drive && e.pair.b.index == e.pair.a.index + 1)
                        ? PairKind::consecutive
                        : PairKind::cross_drive;
      e.transform.dx = parse_double(cols[col++]);
      e.transform.dy = parse_double(cols[col++]);
      e.transform.dtheta = parse_double(cols[col++]);
      e.peak = parse_double(cols[col++]);
      e.z_score = parse_double(cols[col++]);
      e.flag = edge_flag_from_string(cols[col]);
      edges.push_back(e);
    } catch (const InputError& err) {
      throw ParseError(file.string(), line_no, fields[std::min<std::size_t>(col, 9)], err.what());
    }
  }
  if (line_no == 0) throw ParseError(file.string(), 1, "<header>", "empty edges file");
  return edges;
}

inline constexpr const char* kPosesHeader = "drive_id,pose_index,t,x,y,theta";

// Poses in dataset order: drives as listed, then pose index.
inline void write_poses_csv(const FleetDataset& ds, const std::vector<Pose2>& poses,
                            const std::filesystem::path& file) {
  if (poses.size() != ds.pose_count()) throw InputError("pose count does not match the dataset");
  auto out = detail::open_output(file);
  out << kPosesHeader << '\n';
  std::size_t k = 0;
  for (const auto& d : ds.drives) {
    for (std::size_t i = 0; i < d.records.size(); ++i, ++k) {
      out << d.drive_id << ',' << i << ',' << format_double(d.records[i].t) << ',' << format_double(poses[k].x) << ','
          << format_double(poses[k].y) << ',' << format_double(poses[k].theta) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + file.string());
}

inline std::vector<Pose2> read_poses_csv(const FleetDataset& ds, const std::filesystem::path& file) {
  auto in = detail::open_input(file);
  const auto drives = detail::drive_lookup(ds);
  std::vector<std::size_t> first(ds.drives.size() + 1, 0);
  for (std::size_t d = 0; d < ds.drives.size(); ++d) first[d + 1] = first[d] + ds.drives[d].records.size();
  std::vector<Pose2> poses(ds.pose_count());
  std::vector<bool> seen(poses.size(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kPosesHeader) throw ParseError(file.string(), 1, "<header>", "unexpected poses header");
      continue;
    }
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 6) throw ParseError(file.string(), line_no, "<row>", "expected 6 columns");
    const auto it = drives.find(std::string(cols[0]));
    if (it == drives.end()) throw ParseError(file.string(), line_no, "drive_id", "unknown drive");
    std::string field = "pose_index";
    try {
      const std::size_t idx = parse_index(cols[1]);
      const auto& recs = ds.drives[it->second].records;
      if (idx >= recs.size()) throw InputError("pose index out of range");
      const std::size_t k = first[it->second] + idx;
      Pose2 p = recs[idx].noisy;
      field = "x";
      p.x = parse_double(cols[3]);
      field = "y";
      p.y = parse_double(cols[4]);
      field = "theta";
      p.theta = parse_double(cols[5]);
      poses[k] = p;
      seen[k] = true;
    } catch (const InputError& err) {
      throw ParseError(file.string(), line_no, field, err.what());
    }
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) throw InputError(file.string() + ": missing pose rows for the dataset");
  }
  return poses;
}

inline nlohmann::ordered_json report_to_json(const OptimizationReport& r, const PoseGraphProblem& g,
                                              EdgeMethod method) {
  return {{"method", std::string(to_string(method))},
          {"iterations", r.iterations},
          {"chi2_initial", r.chi2_initial},
          {"chi2_final", r.chi2_final},
          {"dropped_edge_count", r.dropped_edge_count},
          {"converged", r.converged},
          {"node_count", g.node_count()},
          {"prior_factor_count", g.priors.size()},
          {"relative_factor_count", g.relatives.size()}};
}

}  // namespace radalign
