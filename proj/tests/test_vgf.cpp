// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "rotavg/pipeline.hpp"
#include "rotavg/vgf.hpp"

namespace rotavg {
namespace {

TEST(LoopError, ConsistentTripletIsZero) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    const Rotation ri = random_rotation(rng), rj = random_rotation(rng), rk = random_rotation(rng);
    const Rotation rij = rj * ri.inverse(), rjk = rk * rj.inverse(), rki = ri * rk.inverse();
    EXPECT_LT(triplet_loop_error(rij, rjk, rki), 1e-6);
  }
  EXPECT_EQ(triplet_loop_error(Rotation(), Rotation(), Rotation()), 0.0);
}

TEST(LoopError, PerturbedEdgeGivesPerturbationAngle) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const Rotation ri = random_rotation(rng), rj = random_rotation(rng), rk = random_rotation(rng);
    const Rotation p = exp_map(deg2rad(70.0) * random_unit_vector(rng));
    // Perturb each of the three edges in turn, on either side.
    const Rotation rij = rj * ri.inverse(), rjk = rk * rj.inverse(), rki = ri * rk.inverse();
    EXPECT_NEAR(triplet_loop_error(p * rij, rjk, rki), 70.0, 1e-9);
    EXPECT_NEAR(triplet_loop_error(rij, rjk * p, rki), 70.0, 1e-9);
    EXPECT_NEAR(triplet_loop_error(rij, rjk, p * rki), 70.0, 1e-9);
  }
}

TEST(WeakTriplets, EmptyCases) {
  EXPECT_TRUE(enumerate_weak_triplets(4, {{0, 1}, {1, 2}}, {}).empty());
  // Star tree without closing edges between leaves.
  EXPECT_TRUE(enumerate_weak_triplets(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, {}).empty());
  EXPECT_TRUE(enumerate_weak_triplets(5, {{0, 1}, {0, 2}}, {{3, 4}}).empty());
}

TEST(WeakTriplets, EveryTripleHasTwoValidEdgesAndOneCandidate) {
  SynthConfig cfg;
  cfg.n = 30;
  cfg.m = 120;
  cfg.seed = 3;
  const auto p = generate_synthetic(cfg);
  const std::set<EdgeKey> tree(p.tree.begin(), p.tree.end());
  std::vector<EdgeKey> cand;
  for (const auto& k : p.graph.edge_keys()) {
    if (!tree.count(k)) cand.push_back(k);
  }
  const auto ts = enumerate_weak_triplets(cfg.n, p.tree, cand);
  std::set<WeakTriplet> unique(ts.begin(), ts.end());
  EXPECT_EQ(unique.size(), ts.size());
  // Brute-force enumeration over node triples.
  std::size_t expected = 0;
  for (NodeId x = 0; x < cfg.n; ++x) {
    for (NodeId y = x + 1; y < cfg.n; ++y) {
      if (!p.graph.has_edge(x, y) || tree.count({x, y})) continue;
      for (NodeId z = 0; z < cfg.n; ++z) {
        if (tree.count(EdgeKey::make(x, z)) && tree.count(EdgeKey::make(y, z))) {
          ++expected;
          EXPECT_TRUE(unique.count({z, x, y}));
        }
      }
    }
  }
  EXPECT_EQ(ts.size(), expected);
}

// Nine-node walkthrough graph, nodes a..i = 0..8.
enum : NodeId { a, b, c, d, e, f, g, h, i };

struct Walkthrough {
  ViewGraph graph;
  std::vector<EdgeKey> tree{{a, c}, {b, c}, {b, e}, {d, e}, {e, h}, {f, g}, {g, i}, {h, i}};
  std::vector<EdgeKey> bad{{b, d}, {d, h}, {c, d}, {e, g}};
};

Walkthrough make_walkthrough() {
  Walkthrough w;
  std::mt19937_64 rng(77);
  std::vector<Rotation> gt;
  for (int k = 0; k < 9; ++k) gt.push_back(random_rotation(rng));
  const std::vector<EdgeKey> others{{a, b}, {c, e}, {b, d}, {d, h}, {f, i},
                                    {e, i}, {c, d}, {e, g}, {e, f}, {b, f}};
  w.graph = ViewGraph(9);
  for (const auto& k : w.tree) w.graph.add_edge(k.i, k.j, gt[k.j] * gt[k.i].inverse(), 1000);
  for (const auto& k : others) {
    Rotation r = gt[k.j] * gt[k.i].inverse();
    if (std::count(w.bad.begin(), w.bad.end(), k)) {
      r = exp_map(deg2rad(70.0) * random_unit_vector(rng)) * r;
    }
    w.graph.add_edge(k.i, k.j, r, 10);
  }
  return w;
}

std::vector<EdgeKey> sorted(std::vector<EdgeKey> v) {
  std::sort(v.begin(), v.end());
  return v;
}

TEST(Walkthrough, InitialWeakTriplets) {
  const Walkthrough w = make_walkthrough();
  ASSERT_EQ(maximum_spanning_tree(w.graph), sorted(w.tree));
  std::vector<EdgeKey> cand;
  for (const auto& k : w.graph.edge_keys()) {
    if (!std::count(w.tree.begin(), w.tree.end(), k)) cand.push_back(k);
  }
  const auto ts = enumerate_weak_triplets(9, w.tree, cand);
  const std::set<WeakTriplet> got(ts.begin(), ts.end());
  // (pivot, closing edge): c-(a,b), b-(c,e), e-(b,d), e-(d,h), g-(f,i), h-(e,i).
  const std::set<WeakTriplet> expected{{c, a, b}, {b, c, e}, {e, b, d},
                                       {e, d, h}, {g, f, i}, {h, e, i}};
  EXPECT_EQ(got, expected);
}

TEST(Walkthrough, IterationByIteration) {
  const Walkthrough w = make_walkthrough();
  FilterConfig cfg;

  cfg.iterations = 1;
  auto r1 = filter_view_graph(w.graph, cfg).report;
  std::vector<EdgeKey> kept1 = w.tree;
  for (EdgeKey k : {EdgeKey{a, b}, EdgeKey{c, e}, EdgeKey{e, i}, EdgeKey{f, i}}) kept1.push_back(k);
  EXPECT_EQ(r1.kept, sorted(kept1));
  EXPECT_EQ(r1.removed, sorted({{b, d}, {d, h}}));
  EXPECT_EQ(r1.unverified, sorted({{c, d}, {e, g}, {e, f}, {b, f}}));
  EXPECT_EQ(r1.per_iteration[0].weak_triplets, 6u);

  cfg.iterations = 2;
  auto r2 = filter_view_graph(w.graph, cfg).report;
  EXPECT_EQ(r2.removed, sorted({{b, d}, {d, h}, {c, d}, {e, g}}));
  EXPECT_TRUE(std::count(r2.kept.begin(), r2.kept.end(), EdgeKey{e, f}));
  EXPECT_EQ(r2.unverified, sorted({{b, f}}));
  EXPECT_EQ(r2.per_iteration[1].weak_triplets, 3u);

  cfg.iterations = 3;
  const FilterResult r3 = filter_view_graph(w.graph, cfg);
  EXPECT_EQ(r3.report.per_iteration[2].weak_triplets, 1u);
  EXPECT_TRUE(std::count(r3.report.kept.begin(), r3.report.kept.end(), EdgeKey{b, f}));
  EXPECT_TRUE(r3.report.unverified.empty());
  EXPECT_EQ(r3.graph.num_edges(), 14u);
  for (const auto& k : w.bad) EXPECT_FALSE(r3.graph.has_edge(k.i, k.j));
}

TEST(Walkthrough, UnverifiedEdgesDroppedUnlessRequested) {
  const Walkthrough w = make_walkthrough();
  FilterConfig cfg;
  cfg.iterations = 1;
  EXPECT_EQ(filter_view_graph(w.graph, cfg).graph.num_edges(), 12u);
  cfg.keep_unverified = true;
  EXPECT_EQ(filter_view_graph(w.graph, cfg).graph.num_edges(), 16u);
}

void expect_partition(const ViewGraph& g, const FilterReport& r) {
  std::vector<EdgeKey> all = r.kept;
  all.insert(all.end(), r.removed.begin(), r.removed.end());
  all.insert(all.end(), r.unverified.begin(), r.unverified.end());
  EXPECT_EQ(sorted(all), g.edge_keys());
  EXPECT_EQ(std::set<EdgeKey>(all.begin(), all.end()).size(), all.size());
  for (const auto& k : r.tree) {
    EXPECT_TRUE(std::binary_search(r.kept.begin(), r.kept.end(), k));
  }
}

TEST(Filter, ConsistentGraphKeepsEverythingCovered) {
  SynthConfig cfg;
  cfg.n = 40;
  cfg.m = 300;
  cfg.seed = 5;
  const auto p = generate_synthetic(cfg);
  const auto r = filter_view_graph(p.graph, {}).report;
  expect_partition(p.graph, r);
  EXPECT_TRUE(r.removed.empty());
}

TEST(Filter, StatusNeverFlipsAcrossIterations) {
  SynthConfig cfg;
  cfg.n = 60;
  cfg.m = 240;
  cfg.noise_sigma = deg2rad(1.0);
  cfg.outlier_ratio = 0.25;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto p = generate_synthetic(cfg);
    FilterReport prev;
    for (std::size_t it = 1; it <= 5; ++it) {
      FilterConfig fc;
      fc.iterations = it;
      const auto r = filter_view_graph(p.graph, fc).report;
      expect_partition(p.graph, r);
      for (const auto& k : prev.kept) {
        EXPECT_TRUE(std::binary_search(r.kept.begin(), r.kept.end(), k));
      }
      for (const auto& k : prev.removed) {
        EXPECT_TRUE(std::binary_search(r.removed.begin(), r.removed.end(), k));
      }
      prev = r;
    }
  }
}

TEST(Filter, NoiselessInliersNeverRemoved) {
  SynthConfig cfg;
  cfg.n = 50;
  cfg.m = 400;
  cfg.outlier_ratio = 0.2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const auto p = generate_synthetic(cfg);
    const std::set<EdgeKey> outliers(p.outliers.begin(), p.outliers.end());
    for (double eps : {0.5, 5.0, 20.0}) {
      FilterConfig fc;
      fc.epsilon_deg = eps;
      const auto r = filter_view_graph(p.graph, fc).report;
      for (const auto& k : r.removed) EXPECT_TRUE(outliers.count(k));
    }
  }
}

// Exhaustive filter over every triangle: an edge is kept when some triangle
// through it closes within epsilon.
std::set<EdgeKey> exhaustive_keep(const ViewGraph& g, double eps_deg) {
  std::set<EdgeKey> keep;
  const std::size_t n = g.num_nodes();
  for (NodeId x = 0; x < n; ++x) {
    for (NodeId y = x + 1; y < n; ++y) {
      if (!g.has_edge(x, y)) continue;
      for (NodeId z = y + 1; z < n; ++z) {
        if (!g.has_edge(y, z) || !g.has_edge(x, z)) continue;
        const double err = triplet_loop_error(*g.relative(x, y), *g.relative(y, z),
                                              *g.relative(z, x));
        if (err <= eps_deg) {
          keep.insert({x, y});
          keep.insert({y, z});
          keep.insert({x, z});
        }
      }
    }
  }
  return keep;
}

TEST(Filter, AgreesWithExhaustiveOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    SynthConfig cfg;
    cfg.n = 6 + trial % 7;
    cfg.m = std::min(cfg.n * (cfg.n - 1) / 2, 3 * cfg.n);
    cfg.outlier_ratio = 0.2;
    cfg.seed = rng();
    const auto p = generate_synthetic(cfg);
    const auto r = filter_view_graph(p.graph, {}).report;
    const auto oracle = exhaustive_keep(p.graph, 5.0);
    const std::set<EdgeKey> tree(r.tree.begin(), r.tree.end());
    const std::set<EdgeKey> outliers(p.outliers.begin(), p.outliers.end());
    for (const auto& k : r.kept) {
      if (tree.count(k)) {
        // Trusted without verification; the generator keeps the tree clean.
        EXPECT_FALSE(outliers.count(k));
      } else {
        EXPECT_TRUE(oracle.count(k)) << k.i << "-" << k.j;
        EXPECT_FALSE(outliers.count(k));
      }
    }
  }
}

TEST(Filter, EmptyGraphAndBadConfig) {
  const auto r = filter_view_graph(ViewGraph(3), {});
  EXPECT_EQ(r.graph.num_edges(), 0u);
  FilterConfig bad;
  bad.epsilon_deg = 0.0;
  EXPECT_THROW(filter_view_graph(ViewGraph(3), bad), InvalidArgument);
  bad = {};
  bad.iterations = 0;
  EXPECT_THROW(filter_view_graph(ViewGraph(3), bad), InvalidArgument);
}

}  // namespace
}  // namespace rotavg
