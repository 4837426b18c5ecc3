// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Block-coordinate minimisation of the rank-3 factorized SDP relaxation of
// chordal rotation averaging:
//
//   min_Y  -tr(G Y^T Y)   s.t.  Y = [Y_1 ... Y_n],  Y_i^T Y_i = I.
//
// Each block update is exact: with the others fixed, the objective restricted
// to Y_j is -2 <Y_j, Q_j> where Q_j = sum_{i != j} Y_i G_ij, minimised by the
// polar factor of Q_j. The Q cache is refreshed incrementally over the
// neighbours of the updated node only, so a full sweep costs O(sum of degrees).

#ifndef ROTAVG_GLOBAL_SOLVER_HPP
#define ROTAVG_GLOBAL_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg {

/// Factor blocks Y_i (orthonormal columns) and the cache Q_j.
class FactorState {
 public:
  FactorState() = default;

  /// Validates Y_i^T Y_i = I (1e-10) and builds Q from scratch.
  FactorState(const ConnectionMatrix& g, std::vector<Mat3> blocks)
      : y_(std::move(blocks)) {
    if (y_.size() != g.num_nodes()) {
      throw InvalidArgument("factor has " + std::to_string(y_.size()) +
                            " blocks for " + std::to_string(g.num_nodes()) + " nodes");
    }
    for (std::size_t i = 0; i < y_.size(); ++i) {
      if (!y_[i].allFinite() ||
          (y_[i].transpose() * y_[i] - Mat3::Identity()).norm() > 1e-10) {
        throw InvalidArgument("factor block " + std::to_string(i) +
                              " is not orthonormal");
      }
    }
    q_ = recompute_q(g, y_);
  }

  std::size_t size() const { return y_.size(); }
  const Mat3& y(NodeId i) const { return y_[i]; }
  const Mat3& q(NodeId i) const { return q_[i]; }
  const std::vector<Mat3>& blocks() const { return y_; }
  const std::vector<Mat3>& cache() const { return q_; }

  /// Q_j = sum_i Y_i G_ij evaluated from scratch.
  static std::vector<Mat3> recompute_q(const ConnectionMatrix& g,
                                       const std::vector<Mat3>& y) {
    std::vector<Mat3> q(g.num_nodes(), Mat3::Zero());
    for (NodeId j = 0; j < g.num_nodes(); ++j) {
      for (const auto& nb : g.row(j)) q[j].noalias() += y[nb.node] * nb.in;
    }
    return q;
  }

 private:
  friend Mat3 block_update(FactorState&, NodeId);
  friend void refresh_q_neighbors(FactorState&, const ConnectionMatrix&, NodeId,
                                  const Mat3&);

  std::vector<Mat3> y_;
  std::vector<Mat3> q_;
};

/// -sum over ordered (i, j) with G_ij present of tr(Y_j^T Y_i G_ij), read
/// through the cache as -sum_j <Y_j, Q_j>. Bounded below by -6m.
inline double cost(const FactorState& state) {
  double c = 0.0;
  for (std::size_t j = 0; j < state.size(); ++j) {
    c -= state.y(j).cwiseProduct(state.q(j)).sum();
  }
  return c;
}

/// Replaces Y_j by the polar factor U V^T of Q_j (orthogonal, determinant
/// unconstrained) and returns the previous block. The cache is NOT refreshed;
/// call refresh_q_neighbors afterwards. A node with Q_j = 0 is left unchanged.
inline Mat3 block_update(FactorState& state, NodeId j) {
  const Mat3 old = state.y_[j];
  const Mat3& q = state.q_[j];
  if (q.norm() == 0.0) {
    warn("block_update: node " + std::to_string(j) + " has no neighbours");
    return old;
  }
  state.y_[j] = nearest_orthogonal(q);
  return old;
}

/// Q_k += (Y_j^new - Y_j^old) G_jk for every neighbour k of j.
inline void refresh_q_neighbors(FactorState& state, const ConnectionMatrix& g,
                                NodeId j, const Mat3& old_block) {
  const Mat3 delta = state.y_[j] - old_block;
  if (delta.isZero(0.0)) return;
  for (const auto& nb : g.row(j)) state.q_[nb.node].noalias() += delta * nb.out;
}

/// Called after each block update with the updated node.
using BlockObserver = std::function<void(const FactorState&, NodeId)>;

/// One Gauss-Seidel pass over nodes in index order. Returns the largest
/// Frobenius change of any block.
inline double run_sweep(FactorState& state, const ConnectionMatrix& g,
                        const BlockObserver& observer = {}) {
  double max_change = 0.0;
  for (NodeId j = 0; j < state.size(); ++j) {
    const Mat3 old = block_update(state, j);
    max_change = std::max(max_change, (state.y(j) - old).norm());
    refresh_q_neighbors(state, g, j, old);
    if (observer) observer(state, j);
  }
  return max_change;
}

/// Gauge-fixed rotations R_i = proj(Y_i^T Y_0), R_0 = I exactly.
/// Throws ConvergenceError if the block determinants disagree in sign or a
/// block is near-singular.
inline std::vector<Rotation> round_to_rotations(const FactorState& state) {
  std::vector<Rotation> out;
  if (state.size() == 0) return out;
  const double ref = state.y(0).determinant();
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double det = state.y(i).determinant();
    if (std::abs(det) < 0.5) {
      throw ConvergenceError("factor block " + std::to_string(i) + " is near-singular");
    }
    if ((det > 0) != (ref > 0)) {
      throw MixedSignError(
          "factor blocks have mixed determinant signs (node " + std::to_string(i) +
          "); the relaxation did not round to SO(3)^n");
    }
  }
  out.reserve(state.size());
  out.push_back(Rotation::identity());
  for (std::size_t i = 1; i < state.size(); ++i) {
    out.push_back(project_to_so3(state.y(i).transpose() * state.y(0)));
  }
  return out;
}

enum class InitStrategy { kRandom, kMstChain, kProvided };

struct SolveConfig {
  std::size_t max_sweeps = 1000;
  double rel_cost_tol = 1e-10;
  /// Largest per-sweep block change (Frobenius) also required for
  /// convergence. The cost is quadratic in the error near the optimum, so
  /// the cost test alone stops at an error of roughly sqrt(rel_cost_tol).
  /// Zero disables the check.
  double block_tol = 1e-12;
  InitStrategy init = InitStrategy::kRandom;
  std::uint64_t seed = 0;
  /// Extra random initializations tried when a random start ends in a
  /// factor with mixed determinant signs (a local minimum of the rank-3
  /// problem). If all of them fail the spanning-tree chain start is used.
  /// Ignored for the other strategies.
  std::size_t restarts = 2;
  /// Used when init == kProvided; one orthonormal block per node.
  std::vector<Mat3> initial_blocks;

  void validate() const {
    if (max_sweeps < 1) throw InvalidArgument("max_sweeps must be >= 1");
    if (!(rel_cost_tol > 0.0)) throw InvalidArgument("rel_cost_tol must be > 0");
    if (!(block_tol >= 0.0)) throw InvalidArgument("block_tol must be >= 0");
  }
};

struct SolveResult {
  std::vector<Rotation> rotations;
  double cost = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  /// Failed random starts before the returned run.
  std::size_t restarts = 0;
  /// The returned run started from the spanning-tree chain after every
  /// random start ended with mixed signs.
  bool chain_fallback = false;
  /// Cost at initialization followed by the cost after each sweep of the
  /// returned run.
  std::vector<double> cost_trace;
  FactorState factor;
};

/// Absolute rotations chained from node 0 along a spanning tree of
/// `g` (the maximum spanning tree when weights are available).
inline std::vector<Rotation> chain_rotations(const ViewGraph& g,
                                             const std::vector<EdgeKey>& tree) {
  std::vector<std::vector<NodeId>> adj(g.num_nodes());
  for (const EdgeKey& e : tree) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  std::vector<Rotation> r(g.num_nodes());
  std::vector<bool> seen(g.num_nodes(), false);
  for (NodeId root = 0; root < g.num_nodes(); ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    std::queue<NodeId> frontier;
    frontier.push(root);
    while (!frontier.empty()) {
      const NodeId a = frontier.front();
      frontier.pop();
      for (NodeId b : adj[a]) {
        if (seen[b]) continue;
        seen[b] = true;
        // R_b = r_ab R_a, re-projected to keep long chains on SO(3).
        r[b] = project_to_so3((*g.relative(a, b) * r[a]).matrix());
        frontier.push(b);
      }
    }
  }
  return r;
}

/// Initial factor blocks for the configured strategy.
inline std::vector<Mat3> initial_blocks(const ViewGraph& g, const SolveConfig& cfg) {
  std::vector<Mat3> y;
  y.reserve(g.num_nodes());
  switch (cfg.init) {
    case InitStrategy::kRandom: {
      std::mt19937_64 rng(cfg.seed);
      for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        y.push_back(random_rotation(rng).matrix());
      }
      break;
    }
    case InitStrategy::kMstChain: {
      for (const Rotation& r : chain_rotations(g, maximum_spanning_tree(g))) {
        y.push_back(r.matrix().transpose());
      }
      break;
    }
    case InitStrategy::kProvided:
      y = cfg.initial_blocks;
      break;
  }
  return y;
}

/// Sweeps until the relative cost change of a full sweep drops below
/// rel_cost_tol and no block moved by more than block_tol, or max_sweeps is
/// reached, then rounds to rotations.
inline SolveResult solve_factor(const ConnectionMatrix& g, std::vector<Mat3> init,
                                const SolveConfig& cfg) {
  cfg.validate();
  SolveResult res;
  res.factor = FactorState(g, std::move(init));
  double prev = cost(res.factor);
  res.cost_trace.push_back(prev);
  for (std::size_t k = 0; k < cfg.max_sweeps; ++k) {
    const double change = run_sweep(res.factor, g);
    const double c = cost(res.factor);
    res.cost_trace.push_back(c);
    res.sweeps = k + 1;
    const bool done = std::abs(c - prev) / std::max(1.0, std::abs(c)) < cfg.rel_cost_tol &&
                      (cfg.block_tol == 0.0 || change < cfg.block_tol);
    prev = c;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.cost = prev;
  res.rotations = round_to_rotations(res.factor);
  return res;
}

/// Solves on a connected view graph. Throws DataError when disconnected.
inline SolveResult solve(const ViewGraph& g, const SolveConfig& cfg) {
  cfg.validate();
  if (g.num_nodes() == 0) throw DataError("solve: empty graph");
  if (!is_connected(g)) {
    throw DataError(
        "solve: view graph is disconnected; extract the largest connected "
        "component first");
  }
  const ConnectionMatrix cm(g);
  SolveConfig attempt = cfg;
  for (std::size_t k = 0;; ++k) {
    try {
      SolveResult res = solve_factor(cm, initial_blocks(g, attempt), attempt);
      res.restarts = k;
      res.chain_fallback = attempt.init != cfg.init;
      return res;
    } catch (const MixedSignError&) {
      if (cfg.init != InitStrategy::kRandom || attempt.init != InitStrategy::kRandom) throw;
    }
    if (k + 1 > cfg.restarts) {
      attempt.init = InitStrategy::kMstChain;
      continue;
    }
    // splitmix64 step for the next seed
    std::uint64_t x = attempt.seed + 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    attempt.seed = x ^ (x >> 31);
  }
}

}  // namespace rotavg

#endif  // ROTAVG_GLOBAL_SOLVER_HPP
