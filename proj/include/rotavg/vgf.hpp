// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fast view-graph filtering: edges of a maximum spanning tree are trusted,
// and the remaining edges are verified by loop consistency of weak triplets
// (two valid edges plus the unverified edge closing the triangle), growing
// the valid set over a fixed number of rounds.

#ifndef ROTAVG_VGF_HPP
#define ROTAVG_VGF_HPP

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg {

struct FilterConfig {
  double epsilon_deg = 5.0;
  std::size_t iterations = 3;
  /// Keep edges that no weak triplet ever covered instead of dropping them.
  bool keep_unverified = false;

  void validate() const {
    if (!(epsilon_deg > 0.0)) throw InvalidArgument("epsilon must be > 0");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  }
};

struct FilterIterationStats {
  std::size_t weak_triplets = 0;
  std::size_t passed = 0;  ///< edges validated this round
  std::size_t failed = 0;  ///< edges removed this round
};

/// kept, removed and unverified partition the input edges.
struct FilterReport {
  std::vector<EdgeKey> tree;        ///< spanning-tree edges (subset of kept)
  std::vector<EdgeKey> kept;        ///< tree edges plus edges that passed
  std::vector<EdgeKey> removed;     ///< failed every weak triplet checked
  std::vector<EdgeKey> unverified;  ///< never covered by a weak triplet
  std::vector<FilterIterationStats> per_iteration;
};

struct FilterResult {
  ViewGraph graph;
  FilterReport report;
};

/// Angle in degrees of the loop i -> j -> k -> i, i.e. of r_ki r_jk r_ij for
/// relative rotations r_ab = R_b R_a^T. Zero for consistent triplets.
inline double triplet_loop_error(const Rotation& r_ij, const Rotation& r_jk,
                                 const Rotation& r_ki) {
  return rad2deg(geodesic_angle(Rotation::identity(), r_ki * r_jk * r_ij));
}

/// Two valid edges (pivot, a) and (pivot, b) and the unverified edge (a, b).
struct WeakTriplet {
  NodeId pivot = 0;
  NodeId a = 0;  ///< a < b
  NodeId b = 0;

  EdgeKey closing() const { return {a, b}; }
  auto operator<=>(const WeakTriplet&) const = default;
};

/// All weak triplets for the given valid and candidate edge sets, ordered by
/// (closing edge, pivot). `valid` and `candidates` must be disjoint.
inline std::vector<WeakTriplet> enumerate_weak_triplets(
    std::size_t num_nodes, const std::vector<EdgeKey>& valid,
    const std::vector<EdgeKey>& candidates) {
  std::vector<std::vector<NodeId>> adj(num_nodes);
  for (const EdgeKey& e : valid) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());

  std::vector<EdgeKey> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  std::vector<WeakTriplet> out;
  std::vector<NodeId> common;
  for (const EdgeKey& c : sorted) {
    common.clear();
    std::set_intersection(adj[c.i].begin(), adj[c.i].end(), adj[c.j].begin(),
                          adj[c.j].end(), std::back_inserter(common));
    for (NodeId p : common) out.push_back({p, c.i, c.j});
  }
  return out;
}

namespace detail {

// r_ab oriented a -> b for an edge known to exist.
inline Rotation oriented(const ViewGraph& g, NodeId a, NodeId b) {
  const RelativeEdge* e = g.find(EdgeKey::make(a, b));
  return a < b ? e->r_ij : e->r_ij.inverse();
}

}  // namespace detail

/// Loop error (degrees) of a weak triplet a -> pivot -> b -> a.
inline double weak_triplet_error(const ViewGraph& g, const WeakTriplet& t) {
  return triplet_loop_error(detail::oriented(g, t.a, t.pivot),
                            detail::oriented(g, t.pivot, t.b),
                            detail::oriented(g, t.b, t.a));
}

/// Runs the filter. Spanning-tree edges are always kept. In each round every
/// current weak triplet is checked and an unverified edge is validated if at
/// least one of its triplets closes within epsilon, removed if all fail.
/// Status changes are committed at the end of the round, so the result does
/// not depend on evaluation order.
inline FilterResult filter_view_graph(const ViewGraph& g, const FilterConfig& cfg) {
  cfg.validate();
  FilterResult result;
  FilterReport& report = result.report;
  if (g.num_edges() == 0) {
    result.graph = g;
    return result;
  }

  enum class Status { kValid, kUnverified, kRemoved };
  std::map<EdgeKey, Status> status;
  for (const auto& [key, e] : g.edges()) status.emplace(key, Status::kUnverified);
  report.tree = maximum_spanning_tree(g);
  for (const EdgeKey& k : report.tree) status[k] = Status::kValid;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<EdgeKey> valid, candidates;
    for (const auto& [k, s] : status) {
      if (s == Status::kValid) valid.push_back(k);
      if (s == Status::kUnverified) candidates.push_back(k);
    }
    const auto triplets = enumerate_weak_triplets(g.num_nodes(), valid, candidates);
    FilterIterationStats stats;
    stats.weak_triplets = triplets.size();

    // Triplets arrive grouped by closing edge.
    std::size_t t = 0;
    while (t < triplets.size()) {
      const EdgeKey edge = triplets[t].closing();
      bool any_pass = false;
      for (; t < triplets.size() && triplets[t].closing() == edge; ++t) {
        if (!any_pass && weak_triplet_error(g, triplets[t]) <= cfg.epsilon_deg) {
          any_pass = true;
        }
      }
      status[edge] = any_pass ? Status::kValid : Status::kRemoved;
      ++(any_pass ? stats.passed : stats.failed);
    }
    report.per_iteration.push_back(stats);
  }

  std::vector<EdgeKey> out_edges;
  for (const auto& [k, s] : status) {
    switch (s) {
      case Status::kValid:
        report.kept.push_back(k);
        out_edges.push_back(k);
        break;
      case Status::kRemoved:
        report.removed.push_back(k);
        break;
      case Status::kUnverified:
        report.unverified.push_back(k);
        if (cfg.keep_unverified) out_edges.push_back(k);
        break;
    }
  }
  result.graph = g.subgraph(out_edges);
  return result;
}

}  // namespace rotavg

#endif  // ROTAVG_VGF_HPP
