// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Robust IRLS refinement of absolute rotations in the Lie algebra. Each outer
// iteration linearizes every edge constraint at the current estimate, so the
// stacked system has one -I and one +I block per edge row, fixes robust
// weights from the current residuals, and solves the weighted normal
// equations for a tangent update of every node except the anchor.

#ifndef ROTAVG_LOCAL_REFINE_HPP
#define ROTAVG_LOCAL_REFINE_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg {

enum class RobustLoss {
  kGemanMcClure,  ///< rho(x) = x^2 / (x^2 + sigma^2)
  kSquared,       ///< rho(x) = x^2, constant weights
};

struct IrlsConfig {
  double sigma_deg = 5.0;
  std::size_t max_outer_iters = 50;
  double step_tol = 1e-8;  ///< radians, on max_k |delta_k|
  NodeId anchor = 0;
  RobustLoss loss = RobustLoss::kGemanMcClure;
  std::size_t max_halvings = 8;

  void validate() const {
    if (!(sigma_deg > 0.0)) throw InvalidArgument("sigma must be > 0");
    if (max_outer_iters < 1) throw InvalidArgument("max_outer_iters must be >= 1");
    if (!(step_tol > 0.0)) throw InvalidArgument("step_tol must be > 0");
  }
};

/// Residual of edge (i, j) at the current estimate, log(R_i^T r_ij^T R_j).
///
/// Under right-multiplicative updates R_k <- R_k exp(d_k) it changes to first
/// order by d_j - d_i, and its norm is the geodesic angle between r_ij and
/// R_j R_i^T.
inline TangentVector edge_residual(const Rotation& r_i, const Rotation& r_j,
                                   const Rotation& r_ij) {
  return log_map(r_i.inverse() * r_ij.inverse() * r_j);
}

inline double robust_loss(double x, double sigma) {
  return x * x / (x * x + sigma * sigma);
}

/// IRLS weight rho'(x) / (2x) = sigma^2 / (x^2 + sigma^2)^2.
inline double robust_weight(double x, double sigma) {
  const double d = x * x + sigma * sigma;
  return sigma * sigma / (d * d);
}

/// Stacked linear model A delta = b at fixed weights. Block row e has -I at
/// column-block i and +I at column-block j (anchor column removed), and
/// b_e = -e_ij so that the linearized residual e_ij + d_j - d_i vanishes.
struct LinearizedSystem {
  Eigen::SparseMatrix<double> a;
  Eigen::VectorXd b;
  Eigen::VectorXd weights;  ///< one per edge
  std::vector<EdgeKey> edges;
  /// node -> column block, -1 for the anchor.
  std::vector<long> column_of;

  /// A^T W A and A^T W b.
  void normal_equations(Eigen::SparseMatrix<double>& h, Eigen::VectorXd& rhs) const {
    Eigen::VectorXd row_w(a.rows());
    for (Eigen::Index e = 0; e < weights.size(); ++e) {
      row_w.segment<3>(3 * e).setConstant(weights(e));
    }
    const Eigen::SparseMatrix<double> wa = row_w.asDiagonal() * a;
    h = Eigen::SparseMatrix<double>(a.transpose() * wa);
    rhs = wa.transpose() * b;
  }
};

inline double refine_objective(const std::vector<Rotation>& r, const ViewGraph& g,
                               const IrlsConfig& cfg) {
  const double sigma = deg2rad(cfg.sigma_deg);
  double total = 0.0;
  for (const auto& [key, e] : g.edges()) {
    const double x = edge_residual(r[key.i], r[key.j], e.r_ij).norm();
    total += cfg.loss == RobustLoss::kSquared ? x * x : robust_loss(x, sigma);
  }
  return total;
}

inline LinearizedSystem linearize(const std::vector<Rotation>& r, const ViewGraph& g,
                                  const IrlsConfig& cfg) {
  const double sigma = deg2rad(cfg.sigma_deg);
  LinearizedSystem sys;
  sys.column_of.assign(g.num_nodes(), -1);
  long col = 0;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (v != cfg.anchor) sys.column_of[v] = col++;
  }
  const auto m = static_cast<Eigen::Index>(g.num_edges());
  sys.b.resize(3 * m);
  sys.weights.resize(m);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(6 * static_cast<std::size_t>(m));
  Eigen::Index row = 0;
  for (const auto& [key, e] : g.edges()) {
    const TangentVector res = edge_residual(r[key.i], r[key.j], e.r_ij);
    sys.b.segment<3>(3 * row) = -res;
    sys.weights(row) =
        cfg.loss == RobustLoss::kSquared ? 1.0 : robust_weight(res.norm(), sigma);
    for (int d = 0; d < 3; ++d) {
      if (sys.column_of[key.i] >= 0) {
        trip.emplace_back(3 * row + d, 3 * sys.column_of[key.i] + d, -1.0);
      }
      if (sys.column_of[key.j] >= 0) {
        trip.emplace_back(3 * row + d, 3 * sys.column_of[key.j] + d, 1.0);
      }
    }
    sys.edges.push_back(key);
    ++row;
  }
  sys.a.resize(3 * m, 3 * col);
  sys.a.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

/// Solves the weighted normal equations; throws DataError if singular.
inline Eigen::VectorXd solve_linearized(const LinearizedSystem& sys) {
  Eigen::SparseMatrix<double> h;
  Eigen::VectorXd rhs;
  sys.normal_equations(h, rhs);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
  if (ldlt.info() != Eigen::Success) {
    throw DataError("IRLS normal equations are singular (graph disconnected or "
                    "weights collapsed)");
  }
  Eigen::VectorXd delta = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
    throw DataError("IRLS normal equations could not be solved");
  }
  const double scale = std::max(1.0, rhs.norm());
  if ((h * delta - rhs).norm() > 1e-6 * scale) {
    throw DataError("IRLS normal equations are numerically singular");
  }
  return delta;
}

struct IrlsResult {
  std::vector<Rotation> rotations;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective at the start followed by one entry per accepted step.
  std::vector<double> objective_trace;
};

inline std::vector<Rotation> apply_update(const std::vector<Rotation>& r,
                                          const LinearizedSystem& sys,
                                          const Eigen::VectorXd& delta, double scale) {
  std::vector<Rotation> out = r;
  for (NodeId v = 0; v < r.size(); ++v) {
    const long c = sys.column_of[v];
    if (c < 0) continue;
    out[v] = r[v] * exp_map(scale * delta.segment<3>(3 * c));
  }
  return out;
}

/// Outer loop: linearize, weight, solve, update R_k <- R_k exp(d_k) with
/// step halving whenever the robust objective would increase. Stops when
/// the largest accepted update is below step_tol.
inline IrlsResult irls_solve(const std::vector<Rotation>& initial, const ViewGraph& g,
                             const IrlsConfig& cfg) {
  cfg.validate();
  if (initial.size() != g.num_nodes()) {
    throw InvalidArgument("irls_solve: rotation count does not match graph");
  }
  if (cfg.anchor >= g.num_nodes()) throw InvalidArgument("irls_solve: bad anchor");
  if (!is_connected(g)) {
    throw DataError("irls_solve: view graph is disconnected");
  }
  IrlsResult res;
  res.rotations = initial;
  double obj = refine_objective(res.rotations, g, cfg);
  res.objective_trace.push_back(obj);
  if (g.num_nodes() < 2) {
    res.converged = true;
    return res;
  }
  for (std::size_t it = 0; it < cfg.max_outer_iters; ++it) {
    res.iterations = it + 1;
    const LinearizedSystem sys = linearize(res.rotations, g, cfg);
    const Eigen::VectorXd delta = solve_linearized(sys);

    double scale = 1.0;
    bool accepted = false;
    std::vector<Rotation> candidate;
    double cand_obj = 0.0;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
      candidate = apply_update(res.rotations, sys, delta, scale);
      cand_obj = refine_objective(candidate, g, cfg);
      if (cand_obj <= obj) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No descent along the Gauss-Newton direction: at a stationary point
      // up to the linearization error.
      res.converged = true;
      break;
    }
    res.rotations = std::move(candidate);
    obj = cand_obj;
    res.objective_trace.push_back(obj);
    double max_step = 0.0;
    for (Eigen::Index c = 0; c < delta.size() / 3; ++c) {
      max_step = std::max(max_step, scale * delta.segment<3>(3 * c).norm());
    }
    if (max_step < cfg.step_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace rotavg

#endif  // ROTAVG_LOCAL_REFINE_HPP
