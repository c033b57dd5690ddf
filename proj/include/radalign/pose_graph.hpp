#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "radalign/correlation.hpp"
#include "radalign/error.hpp"
#include "radalign/geometry.hpp"
#include "radalign/pairs.hpp"
#include "radalign/synthetic.hpp"

namespace radalign {

enum class FactorSource { correlation, consecutive, baseline_icp };

inline std::string_view to_string(FactorSource s) {
  switch (s) {
    case FactorSource::correlation: return "correlation";
    case FactorSource::consecutive: return "consecutive";
    case FactorSource::baseline_icp: return "baseline_icp";
  }
  return "?";
}

enum class LinearSolver { sparse, dense };

// Edge producer; decides gating and the noise model of relative factors.
enum class EdgeMethod { grid, icp };

inline std::string_view to_string(EdgeMethod m) { return m == EdgeMethod::grid ? "grid" : "icp"; }

inline EdgeMethod edge_method_from_string(std::string_view s) {
  if (s == "grid") return EdgeMethod::grid;
  if (s == "icp") return EdgeMethod::icp;
  throw ConfigError("method must be 'grid' or 'icp', got '" + std::string(s) + "'");
}

struct PriorFactor {
  std::size_t node = 0;
  Pose2 measured;
  double sigma_xy = 1.0;
  double sigma_theta = 1.0;
};

struct RelativeFactor {
  std::size_t a = 0;
  std::size_t b = 0;
  Transform2 measured;
  double sigma_xy = 1.0;
  double sigma_theta = 1.0;
  bool robust = true;
  FactorSource source = FactorSource::correlation;
};

struct SolverConfig {
  int max_iterations = 100;
  double lambda_init = 1e-4;
  double lambda_factor = 10.0;
  double rel_error_tol = 1e-6;
  double abs_error_tol = 1e-8;
  double huber_k = 1.345;
  double z_weight_constant = 1.0;
  double z_min = 3.0;
  // Radians of rotational sigma per meter of translational sigma.
  double rotation_per_meter = deg2rad(1.0);
  double icp_sigma_xy = 0.2;
  double icp_sigma_theta = deg2rad(0.2);
  // Applied to GNSS sigmas so zero-noise datasets still give a proper prior.
  double min_prior_sigma = 1e-6;
  bool robust = true;
  LinearSolver solver = LinearSolver::sparse;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("solver.max_iterations must be >= 1");
    if (!(lambda_init > 0)) throw ConfigError("solver.lambda_init must be > 0");
    if (!(lambda_factor > 1)) throw ConfigError("solver.lambda_factor must be > 1");
    if (!(rel_error_tol > 0)) throw ConfigError("solver.rel_error_tol must be > 0");
    if (!(abs_error_tol > 0)) throw ConfigError("solver.abs_error_tol must be > 0");
    if (!(huber_k > 0)) throw ConfigError("solver.huber_k must be > 0");
    if (!(z_weight_constant > 0)) throw ConfigError("solver.z_weight_constant must be > 0");
    if (!(z_min >= 0)) throw ConfigError("solver.z_min must be >= 0");
    if (!(rotation_per_meter > 0)) throw ConfigError("solver.rotation_per_meter must be > 0");
    if (!(icp_sigma_xy > 0 && icp_sigma_theta > 0)) throw ConfigError("solver.icp sigmas must be > 0");
    if (!(min_prior_sigma > 0)) throw ConfigError("solver.min_prior_sigma must be > 0");
  }
};

struct PoseGraphProblem {
  std::vector<PoseKey> keys;
  std::vector<Pose2> initial;
  std::vector<PriorFactor> priors;
  std::vector<RelativeFactor> relatives;
  std::size_t dropped_edge_count = 0;

  std::size_t node_count() const { return keys.size(); }
  std::size_t factor_count() const { return priors.size() + relatives.size(); }
};

// Noise of a correlation edge from its standard score.
inline std::pair<double, double> z_noise(double z, const SolverConfig& cfg) {
  const double sigma = cfg.z_weight_constant / z;
  return {sigma, sigma * cfg.rotation_per_meter};
}

inline bool edge_accepted(const CorrelationResult& e, EdgeMethod method, const SolverConfig& cfg) {
  if (e.flag != EdgeFlag::ok) return false;
  if (method == EdgeMethod::icp) return true;
  return std::isfinite(e.z_score) && e.z_score > 0 && e.z_score >= cfg.z_min;
}

// One node per pose at its noisy GNSS pose, one prior per node and one
// relative factor per accepted edge.
inline PoseGraphProblem build_graph(const FleetDataset& ds, const std::vector<CorrelationResult>& edges,
                                    const SolverConfig& cfg, EdgeMethod method = EdgeMethod::grid) {
  cfg.validate();
  PoseGraphProblem g;
  std::vector<std::size_t> first(ds.drives.size() + 1, 0);
  for (std::size_t d = 0; d < ds.drives.size(); ++d) {
    first[d + 1] = first[d] + ds.drives[d].records.size();
    for (std::size_t i = 0; i < ds.drives[d].records.size(); ++i) {
      const Pose2& p = ds.drives[d].records[i].noisy;
      g.keys.push_back({d, i});
      g.initial.push_back(p);
      g.priors.push_back({g.keys.size() - 1, p, std::max(p.sigma_xy, cfg.min_prior_sigma),
                          std::max(p.sigma_theta, cfg.min_prior_sigma)});
    }
  }
  auto node_of = [&](const PoseKey& k) {
    if (k.drive >= ds.drives.size() || k.index >= ds.drives[k.drive].records.size()) {
      throw GraphError("edge references unknown pose (drive " + std::to_string(k.drive) + ", index " +
                       std::to_string(k.index) + ")");
    }
    return first[k.drive] + k.index;
  };
  for (const auto& e : edges) {
    const std::size_t a = node_of(e.pair.a);
    const std::size_t b = node_of(e.pair.b);
    if (!edge_accepted(e, method, cfg)) {
      ++g.dropped_edge_count;
      continue;
    }
    RelativeFactor f;
    f.a = a;
    f.b = b;
    f.measured = e.transform;
    f.robust = cfg.robust;
    if (method == EdgeMethod::icp) {
      f.sigma_xy = cfg.icp_sigma_xy;
      f.sigma_theta = cfg.icp_sigma_theta;
      f.source = FactorSource::baseline_icp;
    } else {
      std::tie(f.sigma_xy, f.sigma_theta) = z_noise(e.z_score, cfg);
      f.source = e.pair.kind == PairKind::consecutive ? FactorSource::consecutive : FactorSource::correlation;
    }
    g.relatives.push_back(f);
  }
  return g;
}

// Robust error of a whitened squared norm: quadratic inside k, linear beyond,
// continuous in value and slope at the junction.
inline double huber_error(double e2, double k) {
  const double e = std::sqrt(e2);
  return e <= k ? e2 : 2.0 * k * e - k * k;
}

// IRLS weight matching huber_error.
inline double huber_weight(double e2, double k) {
  const double e = std::sqrt(e2);
  return e <= k ? 1.0 : k / e;
}

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Vec3 prior_residual(const Pose2& x, const PriorFactor& f) {
  return {(x.x - f.measured.x) / f.sigma_xy, (x.y - f.measured.y) / f.sigma_xy,
          normalize_angle(x.theta - f.measured.theta) / f.sigma_theta};
}

inline Mat3 prior_jacobian(const PriorFactor& f) {
  return Vec3(1.0 / f.sigma_xy, 1.0 / f.sigma_xy, 1.0 / f.sigma_theta).asDiagonal();
}

inline Vec3 relative_residual(const Pose2& xa, const Pose2& xb, const RelativeFactor& f) {
  const Transform2 pred = relative_transform(xa, xb);
  return {(pred.dx - f.measured.dx) / f.sigma_xy, (pred.dy - f.measured.dy) / f.sigma_xy,
          normalize_angle(pred.dtheta - f.measured.dtheta) / f.sigma_theta};
}

// Whitened Jacobians with respect to (x, y, theta) of a and of b.
inline std::pair<Mat3, Mat3> relative_jacobians(const Pose2& xa, const Pose2& xb, const RelativeFactor& f) {
  const double c = std::cos(xa.theta), s = std::sin(xa.theta);
  const double dx = xb.x - xa.x, dy = xb.y - xa.y;
  const double px = c * dx + s * dy;
  const double py = -s * dx + c * dy;
  Mat3 ja, jb;
  ja << -c, -s, py,
        s, -c, -px,
        0, 0, -1;
  jb << c, s, 0,
        -s, c, 0,
        0, 0, 1;
  const Vec3 w(1.0 / f.sigma_xy, 1.0 / f.sigma_xy, 1.0 / f.sigma_theta);
  return {w.asDiagonal() * ja, w.asDiagonal() * jb};
}

struct FactorResidual {
  bool prior = true;
  std::size_t index = 0;
  double whitened_norm = 0.0;
};

struct OptimizationReport {
  int iterations = 0;
  double chi2_initial = 0.0;
  double chi2_final = 0.0;
  std::size_t dropped_edge_count = 0;
  bool converged = false;
  std::vector<FactorResidual> residuals;
};

struct OptimizationResult {
  std::vector<Pose2> poses;
  OptimizationReport report;
};

namespace detail {

inline double factor_error(const Vec3& r, bool robust, double k) {
  const double e2 = r.squaredNorm();
  return robust ? huber_error(e2, k) : e2;
}

inline double total_error(const PoseGraphProblem& g, const std::vector<Pose2>& x, const SolverConfig& cfg) {
  double chi2 = 0.0;
  for (const auto& f : g.priors) chi2 += prior_residual(x[f.node], f).squaredNorm();
  for (const auto& f : g.relatives) {
    chi2 += factor_error(relative_residual(x[f.a], x[f.b], f), f.robust, cfg.huber_k);
  }
  return chi2;
}

inline void check_finite(const PoseGraphProblem& g, const std::vector<Pose2>& x) {
  for (std::size_t i = 0; i < g.priors.size(); ++i) {
    const auto& f = g.priors[i];
    if (!(f.sigma_xy > 0 && f.sigma_theta > 0) || !prior_residual(x[f.node], f).allFinite()) {
      throw InputError("prior factor " + std::to_string(i) + " (node " + std::to_string(f.node) +
                       ") has a non-finite residual");
    }
  }
  for (std::size_t i = 0; i < g.relatives.size(); ++i) {
    const auto& f = g.relatives[i];
    if (!(f.sigma_xy > 0 && f.sigma_theta > 0) || !relative_residual(x[f.a], x[f.b], f).allFinite()) {
      throw InputError("relative factor " + std::to_string(i) + " (nodes " + std::to_string(f.a) + ", " +
                       std::to_string(f.b) + ") has a non-finite residual");
    }
  }
}

// Gauss-Newton system H dx = -g at x with IRLS weights.
struct NormalEquations {
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd gradient;
  Eigen::VectorXd diagonal;
};

inline NormalEquations linearize(const PoseGraphProblem& g, const std::vector<Pose2>& x, const SolverConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(3 * x.size());
  NormalEquations ne;
  ne.gradient = Eigen::VectorXd::Zero(n);
  ne.diagonal = Eigen::VectorXd::Zero(n);
  ne.triplets.reserve(9 * g.priors.size() + 36 * g.relatives.size());
  // Every block entry is kept, zeros included, so the sparsity pattern is the
  // same at every iteration.
  auto add_block = [&](std::size_t row_node, std::size_t col_node, const Mat3& m) {
    const auto r0 = static_cast<int>(3 * row_node), c0 = static_cast<int>(3 * col_node);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        ne.triplets.emplace_back(r0 + i, c0 + j, m(i, j));
      }
    }
    if (row_node == col_node) ne.diagonal.segment<3>(r0) += m.diagonal();
  };
  for (const auto& f : g.priors) {
    const Mat3 j = prior_jacobian(f);
    const Vec3 r = prior_residual(x[f.node], f);
    add_block(f.node, f.node, j.transpose() * j);
    ne.gradient.segment<3>(static_cast<Eigen::Index>(3 * f.node)) += j.transpose() * r;
  }
  for (const auto& f : g.relatives) {
    const Vec3 r = relative_residual(x[f.a], x[f.b], f);
    const double w = f.robust ? huber_weight(r.squaredNorm(), cfg.huber_k) : 1.0;
    const auto [ja, jb] = relative_jacobians(x[f.a], x[f.b], f);
    add_block(f.a, f.a, w * ja.transpose() * ja);
    add_block(f.b, f.b, w * jb.transpose() * jb);
    add_block(f.a, f.b, w * ja.transpose() * jb);
    add_block(f.b, f.a, w * jb.transpose() * ja);
    ne.gradient.segment<3>(static_cast<Eigen::Index>(3 * f.a)) += w * ja.transpose() * r;
    ne.gradient.segment<3>(static_cast<Eigen::Index>(3 * f.b)) += w * jb.transpose() * r;
  }
  return ne;
}

class DampedSolver {
 public:
  explicit DampedSolver(LinearSolver kind) : kind_(kind) {}

  // Solves (H + lambda diag(H)) dx = -g; false if the factorization fails.
  bool solve(const NormalEquations& ne, double lambda, Eigen::VectorXd& dx) {
    const auto n = ne.gradient.size();
    std::vector<Eigen::Triplet<double>> t = ne.triplets;
    for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), lambda * ne.diagonal(i));
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(t.begin(), t.end());
    if (kind_ == LinearSolver::dense) {
      const Eigen::MatrixXd hd = Eigen::MatrixXd(h);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hd);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
      dx = ldlt.solve(-ne.gradient);
    } else {
      if (!analyzed_) {
        ldlt_.analyzePattern(h);
        analyzed_ = true;
      }
      ldlt_.factorize(h);
      if (ldlt_.info() != Eigen::Success) return false;
      dx = ldlt_.solve(-ne.gradient);
    }
    return dx.allFinite();
  }

 private:
  LinearSolver kind_;
  bool analyzed_ = false;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

inline std::vector<Pose2> retract(const std::vector<Pose2>& x, const Eigen::VectorXd& dx) {
  std::vector<Pose2> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(3 * i);
    out[i].x += dx(k);
    out[i].y += dx(k + 1);
    out[i].theta = normalize_angle(out[i].theta + dx(k + 2));
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kMaxDenseNodes = 2000;

// Levenberg-Marquardt over all node poses.
inline OptimizationResult optimize(const PoseGraphProblem& g, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.solver == LinearSolver::dense && g.node_count() > kMaxDenseNodes) {
    throw ConfigError("dense solver is limited to " + std::to_string(kMaxDenseNodes) + " nodes");
  }
  for (const auto& f : g.priors) {
    if (f.node >= g.node_count()) throw GraphError("prior references unknown node " + std::to_string(f.node));
  }
  for (const auto& f : g.relatives) {
    if (f.a >= g.node_count() || f.b >= g.node_count()) throw GraphError("relative factor references unknown node");
  }

  OptimizationResult res;
  std::vector<Pose2> x = g.initial;
  detail::check_finite(g, x);
  double chi2 = detail::total_error(g, x, cfg);
  res.report.chi2_initial = chi2;
  res.report.dropped_edge_count = g.dropped_edge_count;

  if (g.node_count() == 0 || chi2 < cfg.abs_error_tol) {
    res.report.converged = true;
  } else {
    detail::DampedSolver solver(cfg.solver);
    double lambda = cfg.lambda_init;
    constexpr double kMaxLambda = 1e16;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.report.iterations = it + 1;
      const auto ne = detail::linearize(g, x, cfg);
      bool accepted = false;
      double new_chi2 = chi2;
      std::vector<Pose2> candidate;
      while (lambda <= kMaxLambda) {
        Eigen::VectorXd dx;
        if (solver.solve(ne, lambda, dx)) {
          candidate = detail::retract(x, dx);
          new_chi2 = detail::total_error(g, candidate, cfg);
          if (std::isfinite(new_chi2) && new_chi2 <= chi2) {
            accepted = true;
            lambda = std::max(lambda / cfg.lambda_factor, 1e-12);
            break;
          }
        }
        lambda *= cfg.lambda_factor;
      }
      if (!accepted) {
        // No damping yields a decrease: x is a stationary point.
        res.report.converged = true;
        break;
      }
      const double change = chi2 - new_chi2;
      const double previous = chi2;
      x = std::move(candidate);
      chi2 = new_chi2;
      if (chi2 < cfg.abs_error_tol || change <= cfg.rel_error_tol * previous) {
        res.report.converged = true;
        break;
      }
    }
  }

  res.report.chi2_final = chi2;
  for (std::size_t i = 0; i < g.priors.size(); ++i) {
    res.report.residuals.push_back({true, i, prior_residual(x[g.priors[i].node], g.priors[i]).norm()});
  }
  for (std::size_t i = 0; i < g.relatives.size(); ++i) {
    const auto& f = g.relatives[i];
    res.report.residuals.push_back({false, i, relative_residual(x[f.a], x[f.b], f).norm()});
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i].sigma_xy = g.initial[i].sigma_xy;
    x[i].sigma_theta = g.initial[i].sigma_theta;
  }
  res.poses = std::move(x);
  return res;
}

}  // namespace radalign
