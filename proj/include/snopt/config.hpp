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

#pragma once

// Experiment configuration as a flat INI file (Boost.PropertyTree), dotted
// "section.key=value" overrides, the SNOPT_SEED environment override, and the
// metrics CSV.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/trainer.hpp"

namespace snopt {

inline constexpr const char* kMetricsHeader =
    "iteration,wall_clock_s,train_loss,train_acc,test_loss,test_acc,nfe_fwd,nfe_bwd,t1";

namespace detail {

namespace pt = boost::property_tree;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  std::uint64_t u = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), u);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return u;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

template <class Enum>
Enum parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, Enum>> opts) {
  const std::string s = trim(v);
  for (const auto& [name, e] : opts)
    if (s == name) return e;
  std::string msg = "config: '" + key + "' must be one of";
  for (const auto& [name, e] : opts) msg += std::string(" ") + name;
  throw ConfigError(msg + ", got '" + v + "'");
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data.kind", "data.n_per_class", "data.noise", "data.radii", "data.n_samples", "data.seed",
      "model.hidden", "model.activation", "model.time_input", "model.augment", "model.readout",
      "optimizer.kind", "optimizer.lr", "optimizer.momentum", "optimizer.beta1", "optimizer.beta2",
      "optimizer.adam_eps", "optimizer.eps", "optimizer.alpha", "optimizer.weight_decay",
      "optimizer.readout_rule", "optimizer.readout_lr", "optimizer.curvature",
      "solver.method", "solver.rtol", "solver.atol", "solver.step", "solver.max_steps", "solver.max_step",
      "solver.error_norm",
      "train.t0", "train.t1", "train.batch_size", "train.iterations", "train.grid_samples", "train.eval_every",
      "train.seed",
      "horizon.policy", "horizon.c", "horizon.lr", "horizon.period", "horizon.ema", "horizon.t_min",
      "horizon.t_max"};
  return keys;
}

// Flattens a two-level ptree into "section.key" -> value.
inline std::map<std::string, std::string> flatten(const pt::ptree& tree) {
  std::map<std::string, std::string> kv;
  for (const auto& [section, node] : tree) {
    if (node.empty()) throw ConfigError("config: key '" + section + "' must live inside a [section]");
    for (const auto& [key, leaf] : node) kv[section + "." + key] = leaf.get_value<std::string>();
  }
  return kv;
}

inline void apply_key(ExperimentConfig& c, const std::string& k, const std::string& v) {
  if (!known_keys().count(k)) throw ConfigError("config: unknown key '" + k + "'");
  auto num = [&] { return parse_double(k, v); };
  auto cnt = [&] { return static_cast<std::size_t>(parse_uint(k, v)); };
  if (k == "data.kind")
    c.data.kind = parse_enum<DatasetKind>(k, v, {{"spirals", DatasetKind::spirals}, {"circles", DatasetKind::circles},
                                                 {"regression", DatasetKind::regression}});
  else if (k == "data.n_per_class") c.data.n_per_class = cnt();
  else if (k == "data.noise") c.data.noise = num();
  else if (k == "data.radii") {
    c.data.radii.clear();
    for (const auto& s : split_list(v)) c.data.radii.push_back(parse_double(k, s));
  } else if (k == "data.n_samples") c.data.n_samples = cnt();
  else if (k == "data.seed") c.data.seed = parse_uint(k, v);
  else if (k == "model.hidden") {
    c.model.hidden.clear();
    for (const auto& s : split_list(v)) c.model.hidden.push_back(static_cast<std::size_t>(parse_uint(k, s)));
  } else if (k == "model.activation") {
    try {
      c.model.activation = parse_activation(trim(v));
    } catch (const ConfigError&) {
      throw ConfigError("config: '" + k + "' must be one of tanh relu softplus identity, got '" + v + "'");
    }
  } else if (k == "model.time_input")
    c.model.time_input = parse_enum<TimeInput>(k, v, {{"none", TimeInput::none}, {"concat", TimeInput::concat}});
  else if (k == "model.augment") c.model.augment = cnt();
  else if (k == "model.readout") c.model.readout = parse_bool(k, v);
  else if (k == "optimizer.kind")
    c.optimizer.kind = parse_enum<OptimizerKind>(
        k, v, {{"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}, {"snopt", OptimizerKind::snopt}});
  else if (k == "optimizer.lr") c.optimizer.lr = num();
  else if (k == "optimizer.momentum") c.optimizer.momentum = num();
  else if (k == "optimizer.beta1") c.optimizer.beta1 = num();
  else if (k == "optimizer.beta2") c.optimizer.beta2 = num();
  else if (k == "optimizer.adam_eps") c.optimizer.adam_eps = num();
  else if (k == "optimizer.eps") c.optimizer.eps = num();
  else if (k == "optimizer.alpha") c.optimizer.alpha = num();
  else if (k == "optimizer.weight_decay") c.optimizer.weight_decay = num();
  else if (k == "optimizer.readout_rule")
    c.optimizer.readout_rule = parse_enum<OptimizerKind>(k, v, {{"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}});
  else if (k == "optimizer.readout_lr") c.optimizer.readout_lr = num();
  else if (k == "optimizer.curvature")
    c.optimizer.curvature = parse_enum<CurvatureMode>(
        k, v, {{"gauss_newton", CurvatureMode::gauss_newton_scaled}, {"exact_rank", CurvatureMode::exact_rank}});
  else if (k == "solver.method")
    c.solver.method = parse_enum<Method>(k, v, {{"euler", Method::euler}, {"rk4", Method::rk4}, {"dopri5", Method::dopri5}});
  else if (k == "solver.rtol") c.solver.rtol = num();
  else if (k == "solver.atol") c.solver.atol = num();
  else if (k == "solver.step") c.solver.fixed_step = num();
  else if (k == "solver.max_steps") c.solver.max_steps = cnt();
  else if (k == "solver.max_step") c.solver.max_step = num();
  else if (k == "solver.error_norm")
    c.solver.error_norm = parse_enum<ErrorNorm>(k, v, {{"full", ErrorNorm::full}, {"semi", ErrorNorm::semi}});
  else if (k == "train.t0") c.t0 = num();
  else if (k == "train.t1") c.t1 = num();
  else if (k == "train.batch_size") c.batch_size = cnt();
  else if (k == "train.iterations") c.iterations = cnt();
  else if (k == "train.grid_samples") c.grid_samples = cnt();
  else if (k == "train.eval_every") c.eval_every = cnt();
  else if (k == "train.seed") c.seed = parse_uint(k, v);
  else if (k == "horizon.policy")
    c.horizon.policy = parse_enum<HorizonPolicy>(k, v, {{"fixed", HorizonPolicy::fixed},
                                                        {"second_order", HorizonPolicy::second_order},
                                                        {"first_order", HorizonPolicy::first_order}});
  else if (k == "horizon.c") c.horizon.c = num();
  else if (k == "horizon.lr") c.horizon.lr = num();
  else if (k == "horizon.period") c.horizon.period = cnt();
  else if (k == "horizon.ema") c.horizon.ema = num();
  else if (k == "horizon.t_min") c.horizon.t_min = num();
  else if (k == "horizon.t_max") c.horizon.t_max = num();
}

}  // namespace detail

// "section.key=value"
struct Override {
  std::string key;
  std::string value;

  static Override parse(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "' must look like section.key=value");
    return {detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
  }
  std::string str() const { return key + "=" + value; }
};

inline void apply_override(ExperimentConfig& cfg, const Override& o) { detail::apply_key(cfg, o.key, o.value); }

// SNOPT_SEED, when set, replaces train.seed.
inline void apply_seed_env(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("SNOPT_SEED")) cfg.seed = detail::parse_uint("SNOPT_SEED", s);
}

inline ExperimentConfig parse_config(std::istream& is, const std::vector<Override>& overrides = {},
                                     const std::string& origin = "<stream>") {
  detail::pt::ptree tree;
  try {
    detail::pt::read_ini(is, tree);
  } catch (const detail::pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ExperimentConfig cfg;
  try {
    for (const auto& [k, v] : detail::flatten(tree)) detail::apply_key(cfg, k, v);
    for (const auto& o : overrides) apply_override(cfg, o);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  apply_seed_env(cfg);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<Override>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, overrides, path);
}

// Metrics CSV ---------------------------------------------------------------

inline void write_metrics_header(std::ostream& os, const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << kMetricsHeader << '\n';
}

inline void write_record(std::ostream& os, const TrainRecord& r) {
  const auto old = os.precision(17);
  os << r.iteration << ',' << r.wall_clock_s << ',' << r.train_loss << ',' << r.train_acc << ',' << r.test_loss << ','
     << r.test_acc << ',' << r.nfe_fwd << ',' << r.nfe_bwd << ',' << r.t1 << '\n';
  os.precision(old);
}

struct MetricsFile {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<TrainRecord> records;
};

inline MetricsFile read_metrics_csv(std::istream& is) {
  MetricsFile f;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      f.comments.push_back(detail::trim(std::string_view(line).substr(1)));
      continue;
    }
    if (!header) {
      if (line != kMetricsHeader) throw ConfigError("metrics csv: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw ConfigError("metrics csv: line " + std::to_string(lineno) + " has " +
                                             std::to_string(cells.size()) + " fields");
    auto real = [&](std::size_t i) {
      const std::string& s = cells[i];
      if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
      return detail::parse_double("metrics csv", s);
    };
    auto whole = [&](std::size_t i) { return static_cast<std::size_t>(detail::parse_uint("metrics csv", cells[i])); };
    f.records.push_back({whole(0), real(1), real(2), real(3), real(4), real(5), whole(6), whole(7), real(8)});
  }
  if (!header) throw ConfigError("metrics csv: missing header");
  return f;
}

// Grid files ----------------------------------------------------------------
//
//   [grid]
//   optimizer.lr = 0.01, 0.1
//   optimizer.eps = 0.1, 0.05
//
// The cells are the Cartesian product of the listed values, first key
// slowest. A file with no keys has no cells.

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

using GridCell = std::vector<Override>;

inline std::vector<GridAxis> parse_grid(std::istream& is, const std::string& origin = "<stream>") {
  detail::pt::ptree tree;
  try {
    detail::pt::read_ini(is, tree);
  } catch (const detail::pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::vector<GridAxis> axes;
  for (const auto& [section, node] : tree) {
    if (section != "grid") throw ConfigError(origin + ": only a [grid] section is allowed, found '" + section + "'");
    for (const auto& [key, leaf] : node) {
      if (!detail::known_keys().count(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
      axes.push_back({key, detail::split_list(leaf.get_value<std::string>())});
    }
  }
  return axes;
}

inline std::vector<GridAxis> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file '" + path + "'");
  return parse_grid(in, path);
}

inline std::vector<GridCell> grid_cells(const std::vector<GridAxis>& axes) {
  if (axes.empty()) return {};
  std::vector<GridCell> cells{{}};
  for (const auto& ax : axes) {
    std::vector<GridCell> next;
    for (const auto& c : cells)
      for (const auto& v : ax.values) {
        GridCell n = c;
        n.push_back({ax.key, v});
        next.push_back(std::move(n));
      }
    cells = std::move(next);
  }
  return cells;
}

}  // namespace snopt
