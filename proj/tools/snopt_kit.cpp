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

// snopt_kit: train, grid, verify, error-study, dataset.
//
// Exit codes: 0 success, 1 usage/config/IO error, 2 numeric abort during
// training (the partial CSV is kept), 3 a verification check failed.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snopt/snopt.hpp"

namespace fs = std::filesystem;
using namespace snopt;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 1;
constexpr int kAbort = 2;
constexpr int kVerifyFailed = 3;

std::vector<Override> parse_overrides(const std::vector<std::string>& raw) {
  std::vector<Override> out;
  for (const auto& s : raw) out.push_back(Override::parse(s));
  return out;
}

std::vector<std::string> run_comments(const std::string& config_path, const std::vector<Override>& overrides,
                                      const ExperimentConfig& cfg) {
  std::vector<std::string> c;
  c.push_back("config " + config_path);
  for (const auto& o : overrides) c.push_back("override " + o.str());
  c.push_back("seed " + std::to_string(cfg.seed));
  c.push_back("optimizer " + to_string(cfg.optimizer.kind));
  return c;
}

struct RunOutcome {
  bool aborted = false;
  std::string message;
  std::vector<TrainRecord> records;
};

// Streams records to `out` as they arrive so an aborted run keeps its prefix.
RunOutcome run_to_csv(const ExperimentConfig& cfg, std::ostream& out) {
  RunOutcome r;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& rec) {
    write_record(out, rec);
    out.flush();
    r.records.push_back(rec);
  };
  try {
    train(cfg, hooks);
  } catch (const TrainingAborted& e) {
    r.aborted = true;
    r.message = e.what();
  }
  return r;
}

int cmd_train(const std::string& config_path, const std::string& out_path, const std::vector<std::string>& raw) {
  const auto overrides = parse_overrides(raw);
  const ExperimentConfig cfg = load_config(config_path, overrides);
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot open output file '" + out_path + "'");
  write_metrics_header(out, run_comments(config_path, overrides, cfg));
  const RunOutcome r = run_to_csv(cfg, out);
  if (r.aborted) {
    std::cerr << "training aborted: " << r.message << '\n';
    return kAbort;
  }
  if (!r.records.empty()) {
    const auto& last = r.records.back();
    std::cout << "iterations " << r.records.size() << ", final train loss " << std::setprecision(6) << last.train_loss
              << ", test acc " << last.test_acc << '\n';
  }
  return kOk;
}

std::string join_cell(const GridCell& cell) {
  std::string s;
  for (const auto& o : cell) s += (s.empty() ? "" : ";") + o.str();
  return s;
}

int cmd_grid(const std::string& config_path, const std::string& grid_path, const std::string& out_dir,
             const std::vector<std::string>& raw) {
  const auto overrides = parse_overrides(raw);
  load_config(config_path, overrides);  // fail early on a bad base config
  const auto cells = grid_cells(load_grid(grid_path));
  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "summary.csv");
  if (!summary) throw ConfigError("cannot write summary in '" + out_dir + "'");
  summary << "cell,overrides,status,iterations,final_train_loss,final_train_acc,final_test_loss,final_test_acc\n"
          << std::setprecision(17);

  std::size_t best = cells.size();
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto all = overrides;
    all.insert(all.end(), cells[i].begin(), cells[i].end());
    const ExperimentConfig cfg = load_config(config_path, all);
    const std::string name = "cell_" + std::to_string(i) + ".csv";
    std::ofstream out(fs::path(out_dir) / name);
    write_metrics_header(out, run_comments(config_path, all, cfg));
    const RunOutcome r = run_to_csv(cfg, out);

    // An aborted cell reports an infinite loss so it never wins.
    const double inf = std::numeric_limits<double>::infinity();
    const TrainRecord last = r.records.empty() ? TrainRecord{} : r.records.back();
    const double loss = r.aborted ? inf : (r.records.empty() ? std::numeric_limits<double>::quiet_NaN() : last.train_loss);
    summary << i << ',' << join_cell(cells[i]) << ',' << (r.aborted ? "aborted" : "ok") << ',' << r.records.size()
            << ',' << loss << ',' << last.train_acc << ',' << last.test_loss << ',' << last.test_acc << '\n';
    std::cout << "cell " << i << " [" << join_cell(cells[i]) << "] " << (r.aborted ? "aborted" : "ok")
              << " final train loss " << loss << '\n';
    if (loss < best_loss) {
      best_loss = loss;
      best = i;
    }
  }
  if (best < cells.size())
    std::cout << "best cell " << best << " [" << join_cell(cells[best]) << "] train loss " << std::setprecision(17)
              << best_loss << '\n';
  else
    std::cout << "no finished cells\n";
  return kOk;
}

int cmd_verify(bool mutate, double tol_scale) {
  VerifyOptions o;
  o.flip_sign = mutate;
  o.tol_scale = tol_scale;
  const auto checks = run_verification(o);
  print_checks(checks, std::cout);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  std::cout << (ok ? "all checks passed" : "some checks failed") << '\n';
  return ok ? kOk : kVerifyFailed;
}

int cmd_error_study(std::uint64_t seed, std::size_t batch, const std::string& csv_path) {
  const auto rows = default_error_study(seed, batch);
  write_error_study_markdown(rows, std::cout);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw ConfigError("cannot open output file '" + csv_path + "'");
    write_error_study_csv(rows, out);
  }
  return kOk;
}

int cmd_dataset(const std::string& config_path, const std::string& out_path, const std::vector<std::string>& raw) {
  const ExperimentConfig cfg = load_config(config_path, parse_overrides(raw));
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot open output file '" + out_path + "'");
  write_dataset_csv(make_dataset(cfg), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural ODE training with a second-order optimizer"};
  app.require_subcommand(1);

  std::string config, out, grid, out_dir, csv;
  std::vector<std::string> overrides;
  bool mutate = false;
  double tol_scale = 1.0;
  std::uint64_t seed = 5;
  std::size_t batch = 8;

  auto* train_cmd = app.add_subcommand("train", "train one model and write a metrics CSV");
  train_cmd->add_option("config", config, "experiment config (INI)")->required();
  train_cmd->add_option("out", out, "metrics CSV path")->required();
  train_cmd->add_option("--override", overrides, "section.key=value, repeatable");

  auto* grid_cmd = app.add_subcommand("grid", "run every cell of a hyper-parameter grid");
  grid_cmd->add_option("config", config, "base experiment config (INI)")->required();
  grid_cmd->add_option("grid", grid, "grid file with a [grid] section")->required();
  grid_cmd->add_option("out_dir", out_dir, "directory for per-cell CSVs and summary.csv")->required();
  grid_cmd->add_option("--override", overrides, "section.key=value applied to every cell");

  auto* verify_cmd = app.add_subcommand("verify", "run the oracle checks");
  verify_cmd->add_flag("--mutate-sign", mutate, "flip the sign of the adjoint integrand");
  verify_cmd->add_option("--tol-scale", tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);

  auto* es_cmd = app.add_subcommand("error-study", "cross-solver error table");
  es_cmd->add_option("--seed", seed, "fixture seed");
  es_cmd->add_option("--batch", batch, "number of samples")->check(CLI::PositiveNumber);
  es_cmd->add_option("--csv", csv, "also write the rows as CSV");

  auto* ds_cmd = app.add_subcommand("dataset", "export the configured dataset as CSV");
  ds_cmd->add_option("config", config, "experiment config (INI)")->required();
  ds_cmd->add_option("out", out, "CSV path")->required();
  ds_cmd->add_option("--override", overrides, "section.key=value, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(config, out, overrides);
    if (*grid_cmd) return cmd_grid(config, grid, out_dir, overrides);
    if (*verify_cmd) return cmd_verify(mutate, tol_scale);
    if (*es_cmd) return cmd_error_study(seed, batch, csv);
    if (*ds_cmd) return cmd_dataset(config, out, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}
