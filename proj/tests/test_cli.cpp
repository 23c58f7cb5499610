/*
 Copyright 2026 The snopt-kit Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <sys/wait.h>

#include "snopt/config.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("snopt_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "run.ini") << "[data]\nn_per_class = 10\n[model]\nhidden = 4\naugment = 1\n"
                                       "[solver]\nmethod = rk4\nstep = 0.25\n"
                                       "[train]\niterations = 4\nbatch_size = 8\ngrid_samples = 3\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) {
    const std::string cmd = std::string(SNOPT_KIT_PATH) + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir_ / "stdout"), slurp(dir_ / "stderr")};
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, TrainWritesCsvAndEchoesOverride) {
  const CliResult r = run("train " + path("run.ini") + " " + path("m.csv") + " --override optimizer.lr=0.05");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("m.csv"));
  const snopt::MetricsFile f = snopt::read_metrics_csv(in);
  EXPECT_EQ(f.records.size(), 4u);
  EXPECT_NE(std::find(f.comments.begin(), f.comments.end(), "override optimizer.lr=0.05"), f.comments.end());
  const std::string text = slurp(path("m.csv"));
  EXPECT_NE(text.find("\niteration,wall_clock_s,train_loss,train_acc,test_loss,test_acc,nfe_fwd,nfe_bwd,t1\n"),
            std::string::npos);
  // the echoed override re-parses to the value that was applied
  const auto o = snopt::Override::parse("optimizer.lr=0.05");
  EXPECT_EQ(snopt::load_config(path("run.ini"), {o}).optimizer.lr, 0.05);
}

TEST_F(Cli, TrainMissingConfigExitsOne) {
  const CliResult r = run("train " + path("missing.ini") + " " + path("m.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(path("missing.ini")), std::string::npos);
}

TEST_F(Cli, TrainBadConfigExitsOne) {
  std::ofstream(path("bad.ini")) << "[optimizer]\nlr = abc\n";
  const CliResult r = run("train " + path("bad.ini") + " " + path("m.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("optimizer.lr"), std::string::npos);
}

TEST_F(Cli, TrainNumericAbortExitsTwo) {
  const CliResult r = run("train " + path("run.ini") + " " + path("m.csv") +
                    " --override optimizer.kind=sgd --override optimizer.lr=1e200");
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(Cli, SeedEnvironmentOverride) {
  ::setenv("SNOPT_SEED", "77", 1);
  const CliResult r = run("train " + path("run.ini") + " " + path("m.csv"));
  ::unsetenv("SNOPT_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(slurp(path("m.csv")).find("# seed 77\n"), std::string::npos);
}

TEST_F(Cli, EmptyGridWritesHeaderOnly) {
  std::ofstream(path("g.ini")) << "; no axes\n";
  const CliResult r = run("grid " + path("run.ini") + " " + path("g.ini") + " " + path("out"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string s = slurp(dir_ / "out" / "summary.csv");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1);
}

TEST_F(Cli, GridBestCellIsArgmin) {
  std::ofstream(path("g.ini")) << "[grid]\noptimizer.lr = 0.01, 0.3\noptimizer.eps = 0.1, 0.03\n";
  const CliResult r = run("grid " + path("run.ini") + " " + path("g.ini") + " " + path("out"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_ / "out" / "summary.csv");
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0, best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 8u);
    const double loss = std::stod(cells[4]);
    if (loss < best_loss) {
      best_loss = loss;
      best = std::stoul(cells[0]);
    }
    EXPECT_TRUE(fs::exists(dir_ / "out" / ("cell_" + cells[0] + ".csv")));
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_NE(r.out.find("best cell " + std::to_string(best) + " "), std::string::npos) << r.out;
}

TEST_F(Cli, VerifyPassesAndMutationFails) {
  const CliResult ok = run("verify");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_EQ(std::count(ok.out.begin(), ok.out.end(), '\n'), 7);
  const CliResult bad = run("verify --mutate-sign");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("FAIL adjoint gradient"), std::string::npos);
  const CliResult tight = run("verify --tol-scale 1e-30");
  EXPECT_NE(tight.code, 0);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train only-one-arg").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
}
