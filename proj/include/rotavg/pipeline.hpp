// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hybrid rotation averaging (filter -> global BCM -> robust refinement),
// synthetic problem generation, evaluation and the benchmark harness.

#ifndef ROTAVG_PIPELINE_HPP
#define ROTAVG_PIPELINE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/global_solver.hpp"
#include "rotavg/local_refine.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/vgf.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t n = 100;
  std::size_t m = 300;
  double noise_sigma = 0.0;  ///< radians, std-dev of the per-edge angle
  double outlier_ratio = 0.0;
  double outlier_min_deg = 60.0;
  double outlier_max_deg = 90.0;
  /// Allow spanning-tree edges to be chosen as outliers.
  bool outliers_on_tree = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw InvalidArgument("synthetic graph needs n >= 2");
    if (m < n - 1) throw InvalidArgument("m must be at least n - 1");
    if (m > n * (n - 1) / 2) throw InvalidArgument("m exceeds n(n-1)/2");
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be >= 0");
    if (!(outlier_ratio >= 0.0 && outlier_ratio <= 0.5)) {
      throw InvalidArgument("outlier_ratio must lie in [0, 0.5]");
    }
    if (!(outlier_min_deg > 0.0 && outlier_min_deg <= outlier_max_deg &&
          outlier_max_deg <= 180.0)) {
      throw InvalidArgument("outlier angle range must lie in (0, 180] degrees");
    }
  }
};

struct SyntheticProblem {
  ViewGraph graph;
  std::vector<Rotation> ground_truth;
  std::vector<EdgeKey> tree;      ///< generating spanning tree
  std::vector<EdgeKey> outliers;  ///< sorted
};

/// Correspondence-count weights: tree edges draw from [200, 500], every other
/// edge from [10, 199], so the maximum spanning tree is the generating tree.
inline SyntheticProblem generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SyntheticProblem p;
  p.ground_truth.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) p.ground_truth.push_back(random_rotation(rng));

  // Random spanning tree: attach each node of a random order to an earlier one.
  std::vector<NodeId> order(cfg.n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::set<EdgeKey> edge_set;
  for (std::size_t k = 1; k < cfg.n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    const EdgeKey e = EdgeKey::make(order[k], order[pick(rng)]);
    edge_set.insert(e);
    p.tree.push_back(e);
  }
  std::sort(p.tree.begin(), p.tree.end());

  // Extra edges uniformly over the remaining pairs, without replacement.
  const std::size_t extra = cfg.m - (cfg.n - 1);
  const std::size_t free_pairs = cfg.n * (cfg.n - 1) / 2 - (cfg.n - 1);
  if (extra * 2 > free_pairs) {
    std::vector<EdgeKey> pool;
    pool.reserve(free_pairs);
    for (NodeId i = 0; i < cfg.n; ++i) {
      for (NodeId j = i + 1; j < cfg.n; ++j) {
        if (!edge_set.count({i, j})) pool.push_back({i, j});
      }
    }
    for (std::size_t k = 0; k < extra; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      edge_set.insert(pool[k]);
    }
  } else {
    std::uniform_int_distribution<NodeId> node(0, cfg.n - 1);
    while (edge_set.size() < cfg.m) {
      const NodeId a = node(rng), b = node(rng);
      if (a != b) edge_set.insert(EdgeKey::make(a, b));
    }
  }

  // Outliers among eligible edges.
  const std::set<EdgeKey> tree_set(p.tree.begin(), p.tree.end());
  std::vector<EdgeKey> eligible;
  for (const EdgeKey& e : edge_set) {
    if (cfg.outliers_on_tree || !tree_set.count(e)) eligible.push_back(e);
  }
  const auto num_outliers =
      static_cast<std::size_t>(std::llround(cfg.outlier_ratio * static_cast<double>(cfg.m)));
  if (num_outliers > eligible.size()) {
    throw InvalidArgument("not enough eligible edges for the requested outlier ratio");
  }
  for (std::size_t k = 0; k < num_outliers; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, eligible.size() - 1);
    std::swap(eligible[k], eligible[pick(rng)]);
  }
  p.outliers.assign(eligible.begin(), eligible.begin() + static_cast<long>(num_outliers));
  std::sort(p.outliers.begin(), p.outliers.end());
  const std::set<EdgeKey> outlier_set(p.outliers.begin(), p.outliers.end());

  p.graph = ViewGraph(cfg.n);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::uint64_t> tree_weight(200, 500);
  std::uniform_int_distribution<std::uint64_t> other_weight(10, 199);
  for (const EdgeKey& e : edge_set) {
    const Rotation truth = p.ground_truth[e.j] * p.ground_truth[e.i].inverse();
    Rotation perturb;
    if (outlier_set.count(e)) {
      perturb = random_rotation_with_angle(rng, deg2rad(cfg.outlier_min_deg),
                                           deg2rad(cfg.outlier_max_deg));
    } else {
      const Vec3 axis = random_unit_vector(rng);
      perturb = exp_map(cfg.noise_sigma * noise(rng) * axis);
    }
    const std::uint64_t w = tree_set.count(e) ? tree_weight(rng) : other_weight(rng);
    p.graph.add_edge(e.i, e.j, perturb * truth, w);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// S minimizing sum |R_est,i S - R_gt,i|_F^2 over SO(3).
inline Rotation align_rotations(const std::vector<Rotation>& est,
                                const std::vector<Rotation>& gt) {
  if (est.size() != gt.size()) throw InvalidArgument("align_rotations: size mismatch");
  if (est.empty()) throw InvalidArgument("align_rotations: empty input");
  Mat3 sum = Mat3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    sum += est[i].matrix().transpose() * gt[i].matrix();
  }
  try {
    return project_to_so3(sum);
  } catch (const InvalidArgument&) {
    throw DataError("align_rotations: degenerate alignment matrix");
  }
}

struct ErrorStats {
  double mean_deg = 0.0;
  double median_deg = 0.0;
  double max_deg = 0.0;
  std::size_t count = 0;
};

/// Geodesic errors in degrees after alignment.
inline ErrorStats evaluate(const std::vector<Rotation>& est,
                           const std::vector<Rotation>& gt) {
  if (est.size() != gt.size()) throw InvalidArgument("evaluate: length mismatch");
  ErrorStats s;
  if (est.empty()) return s;
  const Rotation align = align_rotations(est, gt);
  std::vector<double> err;
  err.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    err.push_back(rad2deg(geodesic_angle(est[i] * align, gt[i])));
  }
  double sum = 0.0;
  for (double e : err) sum += e;
  s.count = err.size();
  s.mean_deg = sum / static_cast<double>(err.size());
  s.max_deg = *std::max_element(err.begin(), err.end());
  std::vector<double> sorted = err;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  s.median_deg = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
  return s;
}

/// Matches the rotations present in `est` against `gt` by node id.
inline ErrorStats evaluate(const RotationMap& est, const RotationMap& gt) {
  std::vector<Rotation> a, b;
  for (const auto& [id, r] : est) {
    auto it = gt.find(id);
    if (it == gt.end()) {
      throw InvalidArgument("evaluate: no ground truth for node " + std::to_string(id));
    }
    a.push_back(r);
    b.push_back(it->second);
  }
  return evaluate(a, b);
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct StageTimes {
  double filter_s = 0.0;
  double global_s = 0.0;
  double refine_s = 0.0;
};

/// Output of any pipeline variant, in the input graph's node ids.
struct PipelineResult {
  RotationMap rotations;
  std::vector<NodeId> unregistered;
  std::optional<FilterReport> filter;
  std::optional<SolveResult> global;
  std::optional<IrlsResult> refine;
  StageTimes times;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void finish(PipelineResult& res, const ComponentSubgraph& cc,
                   const std::vector<Rotation>& rotations) {
  for (NodeId v = 0; v < cc.old_to_new.size(); ++v) {
    if (cc.old_to_new[v]) {
      res.rotations.emplace(v, rotations[*cc.old_to_new[v]]);
    } else {
      res.unregistered.push_back(v);
    }
  }
}

}  // namespace detail

/// Global BCM on the largest component of the unfiltered graph.
inline PipelineResult global_only(const ViewGraph& g, const SolveConfig& scfg) {
  if (g.empty()) throw InvalidArgument("global_only: empty graph");
  PipelineResult res;
  const auto cc = largest_connected_component(g);
  const auto t0 = std::chrono::steady_clock::now();
  res.global = solve(cc.graph, scfg);
  res.times.global_s = detail::seconds_since(t0);
  detail::finish(res, cc, res.global->rotations);
  return res;
}

/// IRLS alone, initialized by chaining relative rotations along the maximum
/// spanning tree of the largest component.
inline PipelineResult irls_only(const ViewGraph& g, const IrlsConfig& icfg) {
  if (g.empty()) throw InvalidArgument("irls_only: empty graph");
  PipelineResult res;
  const auto cc = largest_connected_component(g);
  const auto t0 = std::chrono::steady_clock::now();
  const auto init = chain_rotations(cc.graph, maximum_spanning_tree(cc.graph));
  res.refine = irls_solve(init, cc.graph, icfg);
  res.times.refine_s = detail::seconds_since(t0);
  detail::finish(res, cc, res.refine->rotations);
  return res;
}

/// Filter -> largest component -> global BCM -> IRLS seeded by the global
/// solution. Nodes outside the surviving component are reported unregistered.
inline PipelineResult hybrid_solve(const ViewGraph& g, const FilterConfig& fcfg,
                                   const SolveConfig& scfg, const IrlsConfig& icfg) {
  if (g.empty()) throw InvalidArgument("hybrid_solve: empty graph");
  PipelineResult res;
  auto t0 = std::chrono::steady_clock::now();
  FilterResult filtered = filter_view_graph(g, fcfg);
  res.filter = std::move(filtered.report);
  const auto cc = largest_connected_component(filtered.graph);
  res.times.filter_s = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  res.global = solve(cc.graph, scfg);
  res.times.global_s = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  IrlsConfig refine_cfg = icfg;
  refine_cfg.anchor = 0;
  res.refine = irls_solve(res.global->rotations, cc.graph, refine_cfg);
  res.times.refine_s = detail::seconds_since(t0);

  detail::finish(res, cc, res.refine->rotations);
  return res;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

enum class Method { kGlobal, kHybrid, kIrlsOnly };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kGlobal: return "global";
    case Method::kHybrid: return "hybrid";
    case Method::kIrlsOnly: return "irls-only";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "global") return Method::kGlobal;
  if (s == "hybrid") return Method::kHybrid;
  if (s == "irls-only") return Method::kIrlsOnly;
  throw InvalidArgument("unknown method '" + s + "'");
}

struct BenchConfig {
  std::vector<SynthConfig> cells;
  std::vector<Method> methods{Method::kGlobal, Method::kHybrid, Method::kIrlsOnly};
  std::size_t trials = 30;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  /// Write zero for the wall-time columns so output is bit-reproducible.
  bool record_times = true;
  FilterConfig filter;
  SolveConfig solve;
  IrlsConfig refine;
};

struct BenchRow {
  SynthConfig cell;
  Method method = Method::kGlobal;
  std::size_t trial = 0;
  ErrorStats error;
  StageTimes times;
  std::size_t sweeps = 0;
};

/// splitmix64 finalizer; decorrelates seeds derived from small integers.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t trial_seed(std::uint64_t base, std::size_t cell, std::size_t trial) {
  return mix_seed(mix_seed(base ^ (static_cast<std::uint64_t>(cell) << 32)) ^
                  static_cast<std::uint64_t>(trial));
}

/// Runs one method on one synthetic instance. Errors are measured over the
/// registered nodes only.
inline BenchRow run_trial(const SyntheticProblem& prob, Method method,
                          const BenchConfig& cfg, std::uint64_t seed) {
  SolveConfig scfg = cfg.solve;
  scfg.seed = mix_seed(seed ^ 0x5eedULL);
  PipelineResult res;
  switch (method) {
    case Method::kGlobal: res = global_only(prob.graph, scfg); break;
    case Method::kHybrid: res = hybrid_solve(prob.graph, cfg.filter, scfg, cfg.refine); break;
    case Method::kIrlsOnly: res = irls_only(prob.graph, cfg.refine); break;
  }
  RotationMap gt;
  for (NodeId v = 0; v < prob.ground_truth.size(); ++v) gt.emplace(v, prob.ground_truth[v]);
  BenchRow row;
  row.method = method;
  row.error = evaluate(res.rotations, gt);
  row.times = res.times;
  row.sweeps = res.global ? res.global->sweeps : 0;
  return row;
}

inline std::vector<BenchRow> run_benchmark(const BenchConfig& cfg) {
  struct Task {
    std::size_t cell, trial;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
    for (std::size_t t = 0; t < cfg.trials; ++t) tasks.push_back({c, t});
  }
  const std::size_t per_task = cfg.methods.size();
  std::vector<BenchRow> rows(tasks.size() * per_task);
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const Task& task = tasks[k];
      try {
        SynthConfig sc = cfg.cells[task.cell];
        const std::uint64_t seed = trial_seed(cfg.base_seed, task.cell, task.trial);
        sc.seed = seed;
        const SyntheticProblem prob = generate_synthetic(sc);
        for (std::size_t mi = 0; mi < per_task; ++mi) {
          BenchRow row = run_trial(prob, cfg.methods[mi], cfg, seed);
          row.cell = cfg.cells[task.cell];
          row.trial = task.trial;
          if (!cfg.record_times) row.times = {};
          rows[k * per_task + mi] = row;
        }
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k].empty()) {
      throw DataError("benchmark cell " + std::to_string(tasks[k].cell) + " trial " +
                      std::to_string(tasks[k].trial) + ": " + errors[k]);
    }
  }
  return rows;
}

inline constexpr const char* kBenchCsvHeader =
    "n,m,noise_sigma,outlier_ratio,method,trial,mean_err_deg,median_err_deg,"
    "max_err_deg,time_filter_s,time_global_s,time_refine_s,sweeps";

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << kBenchCsvHeader << '\n' << std::setprecision(17);
  for (const BenchRow& r : rows) {
    os << r.cell.n << ',' << r.cell.m << ',' << r.cell.noise_sigma << ','
       << r.cell.outlier_ratio << ',' << to_string(r.method) << ',' << r.trial << ','
       << r.error.mean_deg << ',' << r.error.median_deg << ',' << r.error.max_deg << ','
       << r.times.filter_s << ',' << r.times.global_s << ',' << r.times.refine_s << ','
       << r.sweeps << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

/// Mean of mean_err_deg per (cell index, method) over trials.
inline double mean_error(const std::vector<BenchRow>& rows, const SynthConfig& cell,
                         Method method) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const BenchRow& r : rows) {
    if (r.method == method && r.cell.n == cell.n && r.cell.m == cell.m &&
        r.cell.noise_sigma == cell.noise_sigma &&
        r.cell.outlier_ratio == cell.outlier_ratio) {
      sum += r.error.mean_deg;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

/// Outlier ratios 0, 5, ..., 50 % at fixed size and noise.
inline std::vector<SynthConfig> outlier_sweep_grid(std::size_t n, std::size_t m,
                                                   double noise_sigma) {
  std::vector<SynthConfig> cells;
  for (int k = 0; k <= 10; ++k) {
    SynthConfig c;
    c.n = n;
    c.m = m;
    c.noise_sigma = noise_sigma;
    c.outlier_ratio = 0.05 * k;
    cells.push_back(c);
  }
  return cells;
}

/// Size rows (n, m) of the scaling grid, capped at n <= max_n.
inline std::vector<SynthConfig> size_grid(double noise_sigma, std::size_t max_n = 10000) {
  static constexpr std::size_t kRows[][2] = {
      {20, 30}, {100, 300}, {500, 1000}, {1000, 4000}, {5000, 20000}, {10000, 40000}};
  std::vector<SynthConfig> cells;
  for (const auto& row : kRows) {
    if (row[0] > max_n) continue;
    SynthConfig c;
    c.n = row[0];
    c.m = row[1];
    c.noise_sigma = noise_sigma;
    cells.push_back(c);
  }
  return cells;
}

}  // namespace rotavg

#endif  // ROTAVG_PIPELINE_HPP
