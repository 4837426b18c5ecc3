// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rotavg/cli.hpp"

namespace rotavg::cli {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rotavg_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "rotavg");
    out_.str("");
    err_.str("");
    return dispatch(args, out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, SynthIsDeterministicPerSeed) {
  ASSERT_EQ(run({"synth", "--n", "30", "--m", "60", "--noise", "0.01", "--seed", "4",
                 "--output", path("a.txt"), "--gt", path("gt.txt")}), 0) << err_.str();
  ASSERT_EQ(run({"synth", "--n", "30", "--m", "60", "--noise", "0.01", "--seed", "4",
                 "--output", path("b.txt")}), 0);
  ASSERT_EQ(run({"synth", "--n", "30", "--m", "60", "--noise", "0.01", "--seed", "5",
                 "--output", path("c.txt")}), 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  EXPECT_NE(slurp(path("a.txt")), slurp(path("c.txt")));
  EXPECT_EQ(slurp(path("a.txt")).rfind("# rotavg view graph: 30 nodes, 60 edges", 0), 0u);
  EXPECT_TRUE(fs::exists(path("gt.txt")));
}

TEST_F(CliTest, HybridEndToEndAndEval) {
  ASSERT_EQ(run({"synth", "--n", "60", "--m", "300", "--noise", "0.01", "--outlier-ratio", "0.2",
                 "--seed", "1", "--output", path("g.txt"), "--gt", path("gt.txt")}), 0);
  ASSERT_EQ(run({"hybrid", "--input", path("g.txt"), "--output", path("est.txt"), "--report",
                 path("rep.json")}), 0) << err_.str();
  const auto rep = nlohmann::json::parse(slurp(path("rep.json")));
  EXPECT_GT(rep["filter"]["removed"].get<int>(), 0);
  ASSERT_EQ(run({"eval", "--est", path("est.txt"), "--gt", path("gt.txt")}), 0) << err_.str();
  const auto stats = nlohmann::json::parse(out_.str());
  EXPECT_LT(stats["mean_err_deg"].get<double>(), 2.0);
  EXPECT_EQ(stats["count"].get<std::size_t>(), rep["registered"].get<std::size_t>());
}

TEST_F(CliTest, SolveFilterRefineChain) {
  ASSERT_EQ(run({"synth", "--n", "40", "--m", "120", "--seed", "2", "--output", path("g.txt"),
                 "--gt", path("gt.txt")}), 0);
  ASSERT_EQ(run({"filter", "--input", path("g.txt"), "--output", path("f.txt"), "--report",
                 path("f.jsonl")}), 0) << err_.str();
  std::istringstream lines(slurp(path("f.jsonl")));
  std::string line, last;
  while (std::getline(lines, line)) last = line;
  EXPECT_TRUE(nlohmann::json::parse(last).contains("removed_edges"));
  ASSERT_EQ(run({"solve", "--input", path("g.txt"), "--output", path("s.txt"), "--trace",
                 path("trace.csv"), "--init", "mst-chain"}), 0) << err_.str();
  EXPECT_EQ(slurp(path("trace.csv")).rfind("step,cost\n", 0), 0u);
  ASSERT_EQ(run({"refine", "--input", path("g.txt"), "--init", path("s.txt"), "--output",
                 path("r.txt")}), 0) << err_.str();
  ASSERT_EQ(run({"eval", "--est", path("r.txt"), "--gt", path("gt.txt")}), 0);
  EXPECT_LT(nlohmann::json::parse(out_.str())["max_err_deg"].get<double>(), 1e-6);
}

TEST_F(CliTest, MissingInputIsUsageErrorAndWritesNothing) {
  EXPECT_EQ(run({"solve", "--input", path("nope.txt"), "--output", path("out.txt")}), 1);
  EXPECT_FALSE(fs::exists(path("out.txt")));
  EXPECT_NE(err_.str().find("nope.txt"), std::string::npos);
}

TEST_F(CliTest, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run({"solve", "--bogus"}), 1);
  EXPECT_EQ(run({"frobnicate"}), 1);
  EXPECT_EQ(run({"synth", "--n", "5", "--m", "100", "--output", path("x.txt")}), 1);
  EXPECT_FALSE(fs::exists(path("x.txt")));
  EXPECT_EQ(run({"bench", "--methods", "fast", "--trials", "1"}), 1);
  EXPECT_EQ(run({"solve", "--input", "a", "--output", "b", "--init", "zero"}), 1);
}

TEST_F(CliTest, MalformedInputIsFormatError) {
  {
    std::ofstream f(path("bad.txt"));
    f << "EDGE 0 1 1 0 0 0 10\nEDGE 1 2 1 0 0\n";
  }
  EXPECT_EQ(run({"hybrid", "--input", path("bad.txt"), "--output", path("o.txt")}), 2);
  EXPECT_NE(err_.str().find("line 2"), std::string::npos) << err_.str();
  EXPECT_FALSE(fs::exists(path("o.txt")));
}

TEST_F(CliTest, BenchWithoutTimingsIsBitIdentical) {
  const std::vector<std::string> args{"bench", "--grid", "outliers", "--n", "20", "--m", "40",
                                      "--trials", "2", "--seed", "3", "--no-timings"};
  ASSERT_EQ(run(args), 0) << err_.str();
  const std::string first = out_.str();
  auto again = args;
  again.insert(again.end(), {"--jobs", "2"});
  ASSERT_EQ(run(again), 0);
  EXPECT_EQ(first, out_.str());
  EXPECT_EQ(first.rfind(kBenchCsvHeader, 0), 0u);
}

TEST_F(CliTest, BaDemoReport) {
  ASSERT_EQ(run({"ba-demo", "--cameras", "8", "--seed", "3", "--report", path("ba.csv"),
                 "--scene-out", path("scene.txt")}), 0) << err_.str();
  std::istringstream csv(slurp(path("ba.csv")));
  std::string header, w0, w100;
  std::getline(csv, header);
  std::getline(csv, w0);
  std::getline(csv, w100);
  EXPECT_EQ(header,
            "seed,weight,initial_err_deg,final_err_deg,initial_cost,final_cost,iterations,"
            "accepted_steps,status");
  EXPECT_EQ(w0.rfind("3,0,", 0), 0u);
  EXPECT_EQ(w100.rfind("3,100,", 0), 0u);
  std::ifstream scene(path("scene.txt"));
  EXPECT_NO_THROW(ba::parse_scene(scene));
}

}  // namespace
}  // namespace rotavg::cli
