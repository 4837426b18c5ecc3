// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 usage error or missing
// input, 2 data / format / convergence error. Output files are written to a
// temporary sibling and renamed into place, so a failed run leaves no
// partial output.

#ifndef ROTAVG_CLI_HPP
#define ROTAVG_CLI_HPP

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/global_solver.hpp"
#include "rotavg/local_refine.hpp"
#include "rotavg/pipeline.hpp"
#include "rotavg/ra_ba.hpp"
#include "rotavg/vgf.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg::cli {

/// Bad flags or missing inputs (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError("cannot open '" + path + "'");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw UsageError("cannot write '" + path + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw UsageError("cannot write '" + path + "'");
  }
}

/// Collects output files and commits them together once all work is done.
class Outputs {
 public:
  void add(const std::string& path, std::string content) {
    files_.emplace_back(path, std::move(content));
  }
  void commit() const {
    for (const auto& [path, content] : files_) write_file_atomic(path, content);
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

inline ViewGraph load_graph(const std::string& path) {
  const std::string text = read_file(path);
  return parse_graph(text);
}

inline RotationMap load_rotations(const std::string& path) {
  const std::string text = read_file(path);
  return parse_rotations(text);
}

inline nlohmann::json edges_json(const std::vector<EdgeKey>& keys) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EdgeKey& k : keys) arr.push_back({k.i, k.j});
  return arr;
}

inline std::string filter_report_lines(const FilterReport& r) {
  std::ostringstream os;
  for (std::size_t k = 0; k < r.per_iteration.size(); ++k) {
    const auto& s = r.per_iteration[k];
    nlohmann::json line = {{"iteration", k + 1},
                           {"weak_triplets", s.weak_triplets},
                           {"passed", s.passed},
                           {"failed", s.failed}};
    os << line.dump() << '\n';
  }
  nlohmann::json summary = {{"tree", r.tree.size()},
                            {"kept", r.kept.size()},
                            {"removed", r.removed.size()},
                            {"unverified", r.unverified.size()},
                            {"removed_edges", edges_json(r.removed)},
                            {"unverified_edges", edges_json(r.unverified)}};
  os << summary.dump() << '\n';
  return os.str();
}

inline nlohmann::json stats_json(const ErrorStats& s) {
  return {{"mean_err_deg", s.mean_deg},
          {"median_err_deg", s.median_deg},
          {"max_err_deg", s.max_deg},
          {"count", s.count}};
}

inline std::string trace_csv(const std::vector<double>& trace, const char* column) {
  std::ostringstream os;
  os << "step," << column << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < trace.size(); ++k) os << k << ',' << trace[k] << '\n';
  return os.str();
}

inline void add_filter_flags(CLI::App* sub, FilterConfig& f) {
  sub->add_option("--eps-deg", f.epsilon_deg, "Loop-closure threshold in degrees")
      ->capture_default_str();
  sub->add_option("--iters", f.iterations, "Filtering rounds")->capture_default_str();
  sub->add_flag("--keep-unverified", f.keep_unverified,
                "Keep edges no weak triplet covered");
}

inline void add_solve_flags(CLI::App* sub, SolveConfig& s, std::string& init) {
  sub->add_option("--max-sweeps", s.max_sweeps, "Maximum BCM sweeps")->capture_default_str();
  sub->add_option("--tol", s.rel_cost_tol, "Relative cost-change tolerance")
      ->capture_default_str();
  sub->add_option("--block-tol", s.block_tol,
                  "Largest per-sweep block change for convergence (0 disables)")
      ->capture_default_str();
  sub->add_option("--init", init, "Initialization: random | mst-chain")
      ->check(CLI::IsMember({"random", "mst-chain"}))
      ->capture_default_str();
  sub->add_option("--seed", s.seed, "Seed for random initialization")->capture_default_str();
  sub->add_option("--restarts", s.restarts, "Random restarts after a mixed-sign result")
      ->capture_default_str();
}

inline void add_refine_flags(CLI::App* sub, IrlsConfig& r) {
  sub->add_option("--sigma-deg", r.sigma_deg, "Robust loss scale in degrees")
      ->capture_default_str();
  sub->add_option("--max-iters", r.max_outer_iters, "Maximum IRLS outer iterations")
      ->capture_default_str();
  sub->add_option("--step-tol", r.step_tol, "Stop when the largest update (rad) is below")
      ->capture_default_str();
}

inline InitStrategy parse_init(const std::string& s) {
  return s == "mst-chain" ? InitStrategy::kMstChain : InitStrategy::kRandom;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(rotavg::detail::parse_double(tok, 0));
    } catch (const ParseError&) {
      throw UsageError("invalid number '" + tok + "' in list");
    }
  }
  return out;
}

}  // namespace detail

/// Runs one command line. `args[0]` is the program name.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"Rotation averaging toolkit: view-graph filtering, global BCM solver, "
               "IRLS refinement, benchmarks and rotation-regularized BA.\n"
               "Graph format: 'EDGE i j qw qx qy qz weight' per line (r_ij = R_j R_i^T).\n"
               "Rotation format: 'ROT id qw qx qy qz' per line.",
               "rotavg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // synth
  SynthConfig synth;
  std::string synth_out, synth_gt;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic view graph");
  s_synth->add_option("--n", synth.n, "Number of nodes")->capture_default_str();
  s_synth->add_option("--m", synth.m, "Number of edges")->capture_default_str();
  s_synth->add_option("--noise", synth.noise_sigma, "Inlier noise std-dev (radians)")
      ->capture_default_str();
  s_synth->add_option("--outlier-ratio", synth.outlier_ratio, "Fraction of outlier edges")
      ->capture_default_str();
  s_synth->add_option("--outlier-min-deg", synth.outlier_min_deg)->capture_default_str();
  s_synth->add_option("--outlier-max-deg", synth.outlier_max_deg)->capture_default_str();
  s_synth->add_flag("--outliers-on-tree", synth.outliers_on_tree,
                    "Allow spanning-tree edges to be outliers");
  s_synth->add_option("--seed", synth.seed)->capture_default_str();
  s_synth->add_option("--output", synth_out, "Graph file")->required();
  s_synth->add_option("--gt", synth_gt, "Ground-truth rotation file");

  // filter
  FilterConfig filt;
  std::string filt_in, filt_out, filt_report;
  auto* s_filter = app.add_subcommand("filter", "Remove inconsistent edges by loop checks");
  s_filter->add_option("--input", filt_in, "Graph file")->required();
  s_filter->add_option("--output", filt_out, "Filtered graph file")->required();
  s_filter->add_option("--report", filt_report, "JSON-lines report (default: stderr)");
  detail::add_filter_flags(s_filter, filt);

  // solve
  SolveConfig solve_cfg;
  std::string solve_in, solve_out, solve_trace, solve_init = "random";
  auto* s_solve = app.add_subcommand("solve", "Global BCM solve of the SDP relaxation");
  s_solve->add_option("--input", solve_in, "Graph file")->required();
  s_solve->add_option("--output", solve_out, "Rotation file")->required();
  s_solve->add_option("--trace", solve_trace, "Cost trace CSV");
  detail::add_solve_flags(s_solve, solve_cfg, solve_init);

  // refine
  IrlsConfig refine_cfg;
  std::string ref_in, ref_init, ref_out;
  auto* s_refine = app.add_subcommand("refine", "Robust IRLS refinement");
  s_refine->add_option("--input", ref_in, "Graph file")->required();
  s_refine->add_option("--init", ref_init, "Initial rotation file")->required();
  s_refine->add_option("--output", ref_out, "Rotation file")->required();
  detail::add_refine_flags(s_refine, refine_cfg);

  // hybrid
  FilterConfig hyb_filter;
  SolveConfig hyb_solve;
  IrlsConfig hyb_refine;
  std::string hyb_in, hyb_out, hyb_report, hyb_init = "random";
  auto* s_hybrid = app.add_subcommand("hybrid", "Filter, global solve and refine");
  s_hybrid->add_option("--input", hyb_in, "Graph file")->required();
  s_hybrid->add_option("--output", hyb_out, "Rotation file")->required();
  s_hybrid->add_option("--report", hyb_report, "JSON report");
  detail::add_filter_flags(s_hybrid, hyb_filter);
  detail::add_solve_flags(s_hybrid, hyb_solve, hyb_init);
  detail::add_refine_flags(s_hybrid, hyb_refine);

  // eval
  std::string ev_est, ev_gt;
  auto* s_eval = app.add_subcommand("eval", "Compare rotations to ground truth (JSON)");
  s_eval->add_option("--est", ev_est, "Estimated rotation file")->required();
  s_eval->add_option("--gt", ev_gt, "Ground-truth rotation file")->required();

  // bench
  BenchConfig bench;
  std::string bench_grid = "outliers", bench_out, bench_methods = "global,hybrid,irls-only",
              bench_init = "random";
  std::size_t bench_n = 100, bench_m = 300, bench_max_n = 1000;
  double bench_noise = 0.0175;
  bool no_timings = false;
  auto* s_bench = app.add_subcommand("bench", "Synthetic benchmark (CSV)");
  s_bench->add_option("--grid", bench_grid, "outliers | sizes")
      ->check(CLI::IsMember({"outliers", "sizes"}))
      ->capture_default_str();
  s_bench->add_option("--n", bench_n, "Nodes (outliers grid)")->capture_default_str();
  s_bench->add_option("--m", bench_m, "Edges (outliers grid)")->capture_default_str();
  s_bench->add_option("--max-n", bench_max_n, "Largest size row (sizes grid)")
      ->capture_default_str();
  s_bench->add_option("--noise", bench_noise, "Inlier noise std-dev (radians)")
      ->capture_default_str();
  s_bench->add_option("--trials", bench.trials)->capture_default_str();
  s_bench->add_option("--methods", bench_methods, "Comma-separated: global,hybrid,irls-only")
      ->capture_default_str();
  s_bench->add_option("--seed", bench.base_seed)->capture_default_str();
  s_bench->add_option("--jobs", bench.jobs, "Parallel trials")->capture_default_str();
  s_bench->add_flag("--no-timings", no_timings, "Write zero timings (bit-reproducible CSV)");
  s_bench->add_option("--output", bench_out, "CSV file (default: stdout)");
  detail::add_filter_flags(s_bench, bench.filter);
  s_bench->add_option("--max-sweeps", bench.solve.max_sweeps)->capture_default_str();
  s_bench->add_option("--tol", bench.solve.rel_cost_tol)->capture_default_str();
  s_bench->add_option("--block-tol", bench.solve.block_tol)->capture_default_str();
  s_bench->add_option("--restarts", bench.solve.restarts)->capture_default_str();
  s_bench->add_option("--init", bench_init)
      ->check(CLI::IsMember({"random", "mst-chain"}))
      ->capture_default_str();
  detail::add_refine_flags(s_bench, bench.refine);

  // ba-demo
  ba::RingConfig ring;
  ba::BaConfig ba_cfg;
  std::string ba_report, ba_scene, ba_sweep;
  auto* s_ba = app.add_subcommand("ba-demo", "Rotation-regularized BA on a drifting ring");
  s_ba->add_option("--cameras", ring.cameras)->capture_default_str();
  s_ba->add_option("--drift-deg", ring.drift_deg)->capture_default_str();
  s_ba->add_option("--pixel-noise", ring.pixel_noise)->capture_default_str();
  s_ba->add_option("--weight", ba_cfg.weight, "Known-rotation weight (px^2/rad^2)")
      ->capture_default_str();
  s_ba->add_option("--robust-scale", ba_cfg.robust_scale, "Visual loss scale (px)")
      ->capture_default_str();
  s_ba->add_option("--max-iters", ba_cfg.max_iterations)->capture_default_str();
  s_ba->add_option("--sweep", ba_sweep, "Comma-separated weights to compare");
  s_ba->add_option("--seed", ring.seed)->capture_default_str();
  s_ba->add_option("--report", ba_report, "CSV file (default: stdout)");
  s_ba->add_option("--scene-out", ba_scene, "Write the initial scene");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  const WarningSink previous =
      set_warning_sink([&err](const std::string& msg) { err << "rotavg: warning: " << msg << '\n'; });
  struct Restore {
    WarningSink sink;
    ~Restore() { set_warning_sink(sink); }
  } restore{previous};

  detail::Outputs outputs;
  try {
    if (*s_synth) {
      synth.validate();
      const SyntheticProblem p = generate_synthetic(synth);
      outputs.add(synth_out, serialize_graph(p.graph));
      if (!synth_gt.empty()) outputs.add(synth_gt, serialize_rotations(p.ground_truth));
    } else if (*s_filter) {
      filt.validate();
      const ViewGraph g = detail::load_graph(filt_in);
      const FilterResult r = filter_view_graph(g, filt);
      outputs.add(filt_out, serialize_graph(r.graph));
      const std::string lines = detail::filter_report_lines(r.report);
      if (filt_report.empty()) {
        err << lines;
      } else {
        outputs.add(filt_report, lines);
      }
    } else if (*s_solve) {
      solve_cfg.init = detail::parse_init(solve_init);
      solve_cfg.validate();
      const ViewGraph g = detail::load_graph(solve_in);
      const PipelineResult r = global_only(g, solve_cfg);
      if (!r.unregistered.empty()) {
        warn(std::to_string(r.unregistered.size()) +
             " nodes outside the largest connected component were not solved");
      }
      if (!r.global->converged) warn("BCM stopped at max-sweeps before converging");
      outputs.add(solve_out, serialize_rotations(r.rotations));
      if (!solve_trace.empty()) {
        outputs.add(solve_trace, detail::trace_csv(r.global->cost_trace, "cost"));
      }
    } else if (*s_refine) {
      refine_cfg.validate();
      const ViewGraph g = detail::load_graph(ref_in);
      const RotationMap init = detail::load_rotations(ref_init);
      std::vector<Rotation> start;
      for (NodeId v = 0; v < g.num_nodes(); ++v) {
        auto it = init.find(v);
        if (it == init.end()) {
          throw DataError("initial rotations are missing node " + std::to_string(v));
        }
        start.push_back(it->second);
      }
      const IrlsResult r = irls_solve(start, g, refine_cfg);
      if (!r.converged) warn("IRLS stopped at max-iters before converging");
      outputs.add(ref_out, serialize_rotations(r.rotations));
    } else if (*s_hybrid) {
      hyb_filter.validate();
      hyb_solve.init = detail::parse_init(hyb_init);
      hyb_solve.validate();
      hyb_refine.validate();
      const ViewGraph g = detail::load_graph(hyb_in);
      const PipelineResult r = hybrid_solve(g, hyb_filter, hyb_solve, hyb_refine);
      if (!r.unregistered.empty()) {
        warn(std::to_string(r.unregistered.size()) +
             " nodes were disconnected by filtering and left unregistered");
      }
      outputs.add(hyb_out, serialize_rotations(r.rotations));
      if (!hyb_report.empty()) {
        nlohmann::json rep = {
            {"registered", r.rotations.size()},
            {"unregistered", r.unregistered},
            {"filter",
             {{"kept", r.filter->kept.size()},
              {"removed", r.filter->removed.size()},
              {"unverified", r.filter->unverified.size()}}},
            {"global",
             {{"cost", r.global->cost},
              {"sweeps", r.global->sweeps},
              {"converged", r.global->converged},
              {"restarts", r.global->restarts},
              {"chain_fallback", r.global->chain_fallback}}},
            {"refine",
             {{"iterations", r.refine->iterations},
              {"converged", r.refine->converged},
              {"objective", r.refine->objective_trace.back()}}}};
        outputs.add(hyb_report, rep.dump(2) + "\n");
      }
    } else if (*s_eval) {
      const RotationMap est = detail::load_rotations(ev_est);
      const RotationMap gt = detail::load_rotations(ev_gt);
      out << detail::stats_json(evaluate(est, gt)).dump(2) << '\n';
    } else if (*s_bench) {
      bench.filter.validate();
      bench.solve.init = detail::parse_init(bench_init);
      bench.solve.validate();
      bench.refine.validate();
      bench.record_times = !no_timings;
      bench.methods.clear();
      std::stringstream ms(bench_methods);
      std::string tok;
      while (std::getline(ms, tok, ',')) {
        try {
          bench.methods.push_back(parse_method(tok));
        } catch (const InvalidArgument& e) {
          throw UsageError(e.what());
        }
      }
      if (bench.methods.empty()) throw UsageError("no methods given");
      bench.cells = bench_grid == "sizes" ? size_grid(bench_noise, bench_max_n)
                                          : outlier_sweep_grid(bench_n, bench_m, bench_noise);
      for (const auto& c : bench.cells) c.validate();
      std::ostringstream csv;
      write_bench_csv(csv, run_benchmark(bench));
      if (bench_out.empty()) {
        out << csv.str();
      } else {
        outputs.add(bench_out, csv.str());
      }
    } else if (*s_ba) {
      ba_cfg.validate();
      std::vector<double> weights{0.0, ba_cfg.weight};
      if (!ba_sweep.empty()) weights = detail::parse_list(ba_sweep);
      for (double w : weights) {
        if (!(w >= 0.0)) throw UsageError("weights must be >= 0");
      }
      const ba::DriftScenario sc = ba::make_ring_scenario(ring);
      std::vector<Rotation> truth;
      for (const auto& c : sc.truth.cameras) truth.push_back(c.rotation);
      std::ostringstream csv;
      csv << "seed,weight,initial_err_deg,final_err_deg,initial_cost,final_cost,iterations,"
             "accepted_steps,status\n"
          << std::setprecision(17);
      for (double w : weights) {
        ba::BaConfig c = ba_cfg;
        c.weight = w;
        const ba::BaResult r = w == 0.0 ? ba::optimize_plain(sc.scene, sc.initial, c)
                                        : ba::optimize(sc.scene, sc.initial, c);
        if (r.status == ba::BaStatus::kStalled) warn("weight " + std::to_string(w) + ": " + r.message);
        csv << ring.seed << ',' << w << ',' << ba::mean_rotation_error_deg(sc.initial, truth)
            << ',' << ba::mean_rotation_error_deg(r.estimate, truth) << ','
            << r.cost_trace.front() << ',' << r.cost_trace.back() << ',' << r.iterations << ','
            << r.accepted_steps << ',' << ba::to_string(r.status) << '\n';
      }
      if (!ba_scene.empty()) {
        std::ostringstream scene;
        ba::write_scene(scene, sc.scene, sc.initial);
        outputs.add(ba_scene, scene.str());
      }
      if (ba_report.empty()) {
        out << csv.str();
      } else {
        outputs.add(ba_report, csv.str());
      }
    }
    outputs.commit();
  } catch (const UsageError& e) {
    err << "rotavg: error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidArgument& e) {
    err << "rotavg: error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    err << "rotavg: format error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "rotavg: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

inline int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace rotavg::cli

#endif  // ROTAVG_CLI_HPP
