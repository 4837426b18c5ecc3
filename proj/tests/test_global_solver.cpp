// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "rotavg/global_solver.hpp"
#include "rotavg/pipeline.hpp"

namespace rotavg {
namespace {

double dense_cost(const Eigen::MatrixXd& gd, const std::vector<Mat3>& y) {
  Eigen::MatrixXd stacked(3, 3 * static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) stacked.block<3, 3>(0, 3 * i) = y[i];
  return -(stacked * gd * stacked.transpose()).trace();
}

std::vector<Mat3> random_orthogonal_blocks(std::size_t n, std::mt19937_64& rng) {
  std::vector<Mat3> y;
  std::bernoulli_distribution flip(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    Mat3 r = random_rotation(rng).matrix();
    if (flip(rng)) r.col(0) *= -1.0;
    y.push_back(r);
  }
  return y;
}

TEST(Cost, GroundTruthIsMinusSixM) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.n = 30;
    cfg.m = 80;
    cfg.seed = seed;
    const auto p = generate_synthetic(cfg);
    const ConnectionMatrix g(p.graph);
    std::mt19937_64 rng(seed);
    const Mat3 gauge = random_rotation(rng).matrix();
    std::vector<Mat3> y;
    for (const auto& r : p.ground_truth) y.push_back(gauge * r.matrix().transpose());
    const FactorState s(g, y);
    EXPECT_NEAR(cost(s), -6.0 * 80, 1e-9);
    EXPECT_NEAR(dense_cost(g.to_dense(), y), -6.0 * 80, 1e-9);
  }
}

TEST(Cost, SingleIdentityEdge) {
  ViewGraph vg(2);
  vg.add_edge(0, 1, Rotation(), 1);
  const FactorState s(ConnectionMatrix(vg), {Mat3::Identity(), Mat3::Identity()});
  EXPECT_EQ(cost(s), -6.0);
}

TEST(Cost, ResidualIdentityAndLowerBound) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    SynthConfig cfg;
    cfg.n = 12;
    cfg.m = 30;
    cfg.noise_sigma = 0.3;
    cfg.seed = rng();
    const auto p = generate_synthetic(cfg);
    const ConnectionMatrix g(p.graph);
    const auto y = random_orthogonal_blocks(cfg.n, rng);
    const FactorState s(g, y);
    double sum = 0.0;
    for (NodeId i = 0; i < cfg.n; ++i) {
      for (const auto& nb : g.row(i)) {
        sum += (y[i].transpose() * y[nb.node] - nb.out).squaredNorm();
      }
    }
    EXPECT_NEAR(sum, 12.0 * cfg.m + 2.0 * cost(s), 1e-9);
    EXPECT_NEAR(cost(s), dense_cost(g.to_dense(), y), 1e-9);
    EXPECT_GE(cost(s), -6.0 * cfg.m - 1e-9);
  }
}

TEST(FactorState, RejectsNonOrthonormalBlocks) {
  ViewGraph vg(2);
  vg.add_edge(0, 1, Rotation(), 1);
  const ConnectionMatrix g(vg);
  EXPECT_THROW(FactorState(g, {Mat3::Identity(), 1.01 * Mat3::Identity()}), InvalidArgument);
  EXPECT_THROW(FactorState(g, {Mat3::Identity()}), InvalidArgument);
}

TEST(BlockUpdate, PolarFactorOfRotationIsItself) {
  std::mt19937_64 rng(2);
  const Rotation r = random_rotation(rng);
  // With Y_0 = I, Q_1 = G_01 = r_01^T; choose r_01 = R^T so that Q_1 = R.
  ViewGraph vg(2);
  vg.add_edge(0, 1, r.inverse(), 1);
  const ConnectionMatrix g(vg);
  FactorState s(g, {Mat3::Identity(), random_rotation(rng).matrix()});
  ASSERT_LT((s.q(1) - r.matrix()).norm(), 1e-15);
  block_update(s, 1);
  EXPECT_LT((s.y(1) - r.matrix()).norm(), 1e-14);
  // Two parallel paths double Q: 0 -> 1 directly and 0 -> 2 -> 1 with identity.
  ViewGraph vg2(3);
  vg2.add_edge(0, 1, r.inverse(), 1);
  vg2.add_edge(1, 2, r, 1);
  const ConnectionMatrix g2(vg2);
  FactorState s2(g2, {Mat3::Identity(), Mat3::Identity(), Mat3::Identity()});
  ASSERT_LT((s2.q(1) - 2.0 * r.matrix()).norm(), 1e-14);
  block_update(s2, 1);
  EXPECT_LT((s2.y(1) - r.matrix()).norm(), 1e-14);
  EXPECT_LT((nearest_orthogonal(2.5 * r.matrix()) - r.matrix()).norm(), 1e-14);
}

TEST(BlockUpdate, IsolatedNodeUnchangedWithWarning) {
  ViewGraph vg(3);
  vg.add_edge(0, 1, Rotation(), 1);
  std::mt19937_64 rng(3);
  const auto y = random_orthogonal_blocks(3, rng);
  FactorState s(ConnectionMatrix(vg), y);
  std::string msg;
  const auto old = set_warning_sink([&](const std::string& m) { msg = m; });
  block_update(s, 2);
  set_warning_sink(old);
  EXPECT_EQ(s.y(2), y[2]);
  EXPECT_FALSE(msg.empty());
}

TEST(BlockUpdate, MonotoneAndBlockOptimal) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    SynthConfig cfg;
    cfg.n = 10;
    cfg.m = 25;
    cfg.noise_sigma = 0.5;
    cfg.seed = rng();
    const auto p = generate_synthetic(cfg);
    const ConnectionMatrix g(p.graph);
    FactorState s(g, random_orthogonal_blocks(cfg.n, rng));
    for (NodeId j = 0; j < cfg.n; ++j) {
      const double before = cost(s);
      const Mat3 old = block_update(s, j);
      refresh_q_neighbors(s, g, j, old);
      const double after = cost(s);
      EXPECT_LE(after, before + 1e-12);
      for (int k = 0; k < 100; ++k) {
        std::vector<Mat3> y = s.blocks();
        y[j] = random_orthogonal_blocks(1, rng)[0] * (k % 2 ? y[j] : Mat3::Identity());
        EXPECT_GE(cost(FactorState(g, y)), after - 1e-12);
      }
    }
  }
}

TEST(RefreshQ, MatchesRecomputationAndTouchesOnlyNeighbours) {
  std::mt19937_64 rng(5);
  SynthConfig cfg;
  cfg.n = 40;
  cfg.m = 90;
  cfg.noise_sigma = 0.2;
  cfg.seed = 5;
  const auto p = generate_synthetic(cfg);
  const ConnectionMatrix g(p.graph);
  FactorState s(g, random_orthogonal_blocks(cfg.n, rng));
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (NodeId j = 0; j < cfg.n; ++j) {
      const std::vector<Mat3> before = s.cache();
      const Mat3 old = block_update(s, j);
      refresh_q_neighbors(s, g, j, old);
      std::vector<bool> neighbour(cfg.n, false);
      for (const auto& nb : g.row(j)) neighbour[nb.node] = true;
      for (NodeId k = 0; k < cfg.n; ++k) {
        if (!neighbour[k]) {
          EXPECT_EQ(s.q(k), before[k]);
        }
      }
      const auto fresh = FactorState::recompute_q(g, s.blocks());
      for (NodeId k = 0; k < cfg.n; ++k) EXPECT_LT((fresh[k] - s.q(k)).norm(), 1e-10);
    }
  }
  // Zero delta leaves the cache bitwise unchanged.
  const auto cache = s.cache();
  refresh_q_neighbors(s, g, 0, s.y(0));
  EXPECT_EQ(s.cache(), cache);
}

TEST(Rounding, RecoversGaugedRotations) {
  std::mt19937_64 rng(6);
  SynthConfig cfg;
  cfg.n = 15;
  cfg.m = 30;
  cfg.seed = 6;
  const auto p = generate_synthetic(cfg);
  const ConnectionMatrix g(p.graph);
  for (bool reflect : {false, true}) {
    Mat3 q = random_rotation(rng).matrix();
    if (reflect) q.col(1) *= -1.0;
    std::vector<Mat3> y;
    for (const auto& r : p.ground_truth) y.push_back(q * r.matrix().transpose());
    const auto rounded = round_to_rotations(FactorState(g, y));
    EXPECT_EQ(rounded[0].matrix(), Mat3::Identity());
    for (NodeId i = 0; i < cfg.n; ++i) {
      const Mat3 expected = p.ground_truth[i].matrix() * p.ground_truth[0].matrix().transpose();
      EXPECT_LT((rounded[i].matrix() - expected).norm(), 1e-12);
    }
  }
}

TEST(Rounding, AllIdentityAndMixedSigns) {
  ViewGraph vg(3);
  vg.add_edge(0, 1, Rotation(), 1);
  vg.add_edge(1, 2, Rotation(), 1);
  const ConnectionMatrix g(vg);
  const std::vector<Mat3> id(3, Mat3::Identity());
  for (const auto& r : round_to_rotations(FactorState(g, id))) {
    EXPECT_EQ(r.matrix(), Mat3::Identity());
  }
  std::vector<Mat3> mixed = id;
  mixed[2](2, 2) = -1.0;
  EXPECT_THROW(round_to_rotations(FactorState(g, mixed)), ConvergenceError);
}

TEST(Solve, NoiselessExactRecovery) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const auto p = generate_synthetic(cfg);
    SolveConfig sc;
    sc.seed = seed;
    const auto r = solve(p.graph, sc);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.cost, -6.0 * cfg.m, 1e-6);
    EXPECT_LT(evaluate(r.rotations, p.ground_truth).mean_deg, 1e-8);
    EXPECT_EQ(r.rotations[0].matrix(), Mat3::Identity());
    for (std::size_t k = 1; k < r.cost_trace.size(); ++k) {
      EXPECT_LE(r.cost_trace[k], r.cost_trace[k - 1] + 1e-12);
    }
  }
}

TEST(Solve, SingleEdge) {
  std::mt19937_64 rng(7);
  const Rotation r01 = random_rotation(rng);
  ViewGraph vg(2);
  vg.add_edge(0, 1, r01, 1);
  SolveConfig sc;
  sc.block_tol = 0.0;
  const auto r = solve(vg, sc);
  EXPECT_LE(r.sweeps, 2u);
  EXPECT_LT(geodesic_angle(r.rotations[1] * r.rotations[0].inverse(), r01), 1e-12);
}

TEST(Solve, MstChainInitAndDeterminism) {
  SynthConfig cfg;
  cfg.noise_sigma = 0.1;
  cfg.seed = 8;
  const auto p = generate_synthetic(cfg);
  SolveConfig sc;
  sc.seed = 3;
  const auto a = solve(p.graph, sc);
  const auto b = solve(p.graph, sc);
  EXPECT_EQ(serialize_rotations(a.rotations), serialize_rotations(b.rotations));
  EXPECT_EQ(a.cost_trace, b.cost_trace);
  sc.init = InitStrategy::kMstChain;
  const auto c = solve(p.graph, sc);
  EXPECT_NEAR(c.cost, a.cost, 1e-6);
}

TEST(Solve, ChainInitOnNoiselessGraphIsExact) {
  SynthConfig cfg;
  cfg.seed = 9;
  const auto p = generate_synthetic(cfg);
  const auto r = chain_rotations(p.graph, maximum_spanning_tree(p.graph));
  EXPECT_LT(evaluate(r, p.ground_truth).mean_deg, 1e-9);
}

TEST(Solve, ProvidedInit) {
  SynthConfig cfg;
  cfg.n = 10;
  cfg.m = 20;
  cfg.seed = 10;
  const auto p = generate_synthetic(cfg);
  SolveConfig sc;
  sc.init = InitStrategy::kProvided;
  for (const auto& r : p.ground_truth) sc.initial_blocks.push_back(r.matrix().transpose());
  const auto r = solve(p.graph, sc);
  EXPECT_EQ(r.sweeps, 1u);
  sc.initial_blocks.pop_back();
  EXPECT_THROW(solve(p.graph, sc), InvalidArgument);
}

TEST(Solve, RestartsAfterMixedSignLocalMinimum) {
  // A sparse instance whose first random start ends with mixed signs.
  SynthConfig cfg;
  cfg.n = 30;
  cfg.m = 60;
  cfg.noise_sigma = 0.02;
  cfg.outlier_ratio = 0.1;
  cfg.seed = 2;
  const auto p = generate_synthetic(cfg);
  SolveConfig sc;
  sc.seed = 2;
  sc.restarts = 5;
  const auto r = solve(p.graph, sc);
  EXPECT_GE(r.restarts, 1u);
  EXPECT_FALSE(r.chain_fallback);
  EXPECT_EQ(r.rotations[0].matrix(), Mat3::Identity());
  // Same optimum as the spanning-tree start.
  SolveConfig chain;
  chain.init = InitStrategy::kMstChain;
  EXPECT_NEAR(r.cost, solve(p.graph, chain).cost, 1e-6);
  // Without restarts the chain start takes over directly.
  sc.restarts = 0;
  const auto f = solve(p.graph, sc);
  EXPECT_EQ(f.restarts, 1u);
  EXPECT_TRUE(f.chain_fallback);
  EXPECT_NEAR(f.cost, r.cost, 1e-6);
  // The raw factor from the first start does not round.
  EXPECT_THROW(solve_factor(ConnectionMatrix(p.graph), initial_blocks(p.graph, sc), sc),
               MixedSignError);
}

TEST(Solve, Errors) {
  ViewGraph vg(4);
  vg.add_edge(0, 1, Rotation(), 1);
  vg.add_edge(2, 3, Rotation(), 1);
  EXPECT_THROW(solve(vg, {}), DataError);
  EXPECT_THROW(solve(ViewGraph(), {}), DataError);
  SolveConfig bad;
  bad.max_sweeps = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = {};
  bad.rel_cost_tol = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

}  // namespace
}  // namespace rotavg
