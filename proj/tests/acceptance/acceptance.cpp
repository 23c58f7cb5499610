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

// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Set SNOPT_ACCEPTANCE_ONLY=1,5,11 to run a subset.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snopt/snopt.hpp"

using namespace snopt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SolverConfig dopri5(double tol) {
  SolverConfig c;
  c.rtol = c.atol = tol;
  return c;
}

std::vector<double> random_vector(std::size_t n, SplitMix64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// ---- 1 ------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const CheckResult c = check_gradient();
  const double t = seconds_since(start);
  return {c.pass && t < 10.0, fmt("rel err %.3e (< 1e-4), %.2f s (< 10 s)", c.error, t)};
}

// ---- 2 ------------------------------------------------------------------

Outcome dense_curvature() {
  const auto start = std::chrono::steady_clock::now();
  const CheckResult sandwich = check_dense_curvature();
  const CheckResult scalar = check_linear_curvature();
  const std::size_t n = MlpSpec::make(2, {4}, Activation::tanh).num_params();
  const double t = seconds_since(start);
  return {sandwich.pass && scalar.pass && n <= 30 && t < 60.0,
          fmt("2-4-2 (n=%zu) rel err %.3e (< 1e-3), scalar |Q_uu-2| %.3e (< 1e-6), %.2f s (< 60 s)", n,
              sandwich.error, scalar.error, t)};
}

// ---- 3 ------------------------------------------------------------------

Outcome lowrank_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(31);
  const SolverConfig cfg = dopri5(1e-10);
  const std::vector<MlpSpec> nets{
      MlpSpec::make(2, {4}, Activation::tanh),          MlpSpec::make(2, {3, 3}, Activation::tanh),
      MlpSpec::make(3, {4}, Activation::softplus),      MlpSpec::make(2, {5}, Activation::tanh, TimeInput::concat),
      MlpSpec::make(3, {2, 3}, Activation::softplus),
  };
  const std::size_t batch = 2;
  double worst = 0.0;
  for (const auto& spec : nets) {
    const std::size_t m = spec.state_dim();
    const ParamVec theta = ParamVec::glorot(spec, rng.next_u64());
    const auto x1 = random_vector(batch * m, rng);
    for (std::size_t R : {std::size_t{1}, std::size_t{2}, m}) {
      std::vector<TerminalCurvature> curv(batch);
      for (auto& c : curv) {
        c.grad = random_vector(m, rng);
        for (std::size_t i = 0; i < R; ++i) c.factors.push_back(random_vector(m, rng));
      }
      const auto dense = dense_sweep(spec, theta, x1, curv, 0.0, 1.0, cfg);
      const auto low = lowrank_sweep(spec, theta, x1, curv, 0.0, 1.0, cfg);
      worst = std::max({worst, relative_error(low.q_xx(), dense.q_xx), relative_error(low.q_xu(), dense.q_xu),
                        relative_error(assemble_quu(low), dense.q_uu)});
    }
  }
  const double t = seconds_since(start);
  return {worst < 1e-6 && t < 60.0, fmt("5 nets x R in {1,2,m}: worst rel err %.3e (< 1e-6), %.2f s (< 60 s)", worst, t)};
}

// ---- 4 ------------------------------------------------------------------

Outcome kronecker_exactness() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    VerifyOptions o;
    o.seed = seed;
    worst = std::max(worst, check_kronecker_exactness(o).error);
  }
  return {worst <= 1e-10, fmt("worst rel err %.3e over 5 draws (<= 1e-10)", worst)};
}

// ---- 5 ------------------------------------------------------------------

Outcome eigenbasis_identity() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    VerifyOptions o;
    o.seed = seed;
    worst = std::max(worst, check_eigenbasis_identity(o).error);
  }
  return {worst <= 1e-8, fmt("worst rel err %.3e, factors up to 8x8 (<= 1e-8)", worst)};
}

// ---- 6, 7 ---------------------------------------------------------------

// Spirals fixture shared by the convergence and sensitivity runs.
ExperimentConfig spirals_fixture(OptimizerKind kind, double lr, std::uint64_t seed) {
  ExperimentConfig c;
  c.data.kind = DatasetKind::spirals;
  c.data.n_per_class = 100;
  c.data.noise = 0.05;
  c.model.hidden = {16};
  c.model.activation = Activation::tanh;
  c.model.augment = 2;
  c.optimizer.kind = kind;
  c.optimizer.lr = lr;
  c.solver.method = Method::rk4;
  c.solver.fixed_step = 0.1;
  c.batch_size = 64;
  c.iterations = 600;
  c.grid_samples = 11;
  c.eval_every = c.iterations;
  c.seed = seed;
  return c;
}

constexpr std::size_t kSmoothWindow = 25;

struct Run {
  double lr = 0.0;
  std::vector<double> smoothed;  // trailing mean of the minibatch loss
  double seconds_per_iteration = 0.0;
  bool aborted = false;

  double final_loss() const { return aborted || smoothed.empty() ? kInf : smoothed.back(); }
};

Run run_fixture(const ExperimentConfig& cfg) {
  Run r;
  r.lr = cfg.optimizer.lr;
  try {
    const TrainResult res = train(cfg, {});
    double sum = 0.0;
    for (std::size_t i = 0; i < res.records.size(); ++i) {
      sum += res.records[i].train_loss;
      if (i >= kSmoothWindow) sum -= res.records[i - kSmoothWindow].train_loss;
      r.smoothed.push_back(sum / static_cast<double>(std::min(i + 1, kSmoothWindow)));
    }
    r.seconds_per_iteration = res.records.back().wall_clock_s / static_cast<double>(res.records.size());
    if (!std::isfinite(r.final_loss())) r.aborted = true;
  } catch (const TrainingAborted&) {
    r.aborted = true;
  }
  return r;
}

std::vector<Run> run_grid(OptimizerKind kind, std::span<const double> grid, std::uint64_t seed) {
  std::vector<Run> out;
  for (double lr : grid) out.push_back(run_fixture(spirals_fixture(kind, lr, seed)));
  return out;
}

const Run& best_of(const std::vector<Run>& runs) {
  return *std::min_element(runs.begin(), runs.end(),
                           [](const Run& a, const Run& b) { return a.final_loss() < b.final_loss(); });
}

double spread(const std::vector<Run>& runs) {
  double lo = kInf, hi = -kInf;
  for (const auto& r : runs) {
    lo = std::min(lo, r.final_loss());
    hi = std::max(hi, r.final_loss());
  }
  return hi - lo;
}

// Grid results for seed 0, shared by criteria 6 and 7.
struct Tuning {
  std::vector<Run> adam, snopt;
  bool done = false;
};

Tuning& tuning() {
  static Tuning t;
  if (!t.done) {
    t.adam = run_grid(OptimizerKind::adam, kAdamLrGrid, 0);
    t.snopt = run_grid(OptimizerKind::snopt, kSnoptLrGrid, 0);
    t.done = true;
  }
  return t;
}

Outcome convergence_trend() {
  const auto start = std::chrono::steady_clock::now();
  Tuning& tu = tuning();
  const double adam_lr = best_of(tu.adam).lr, snopt_lr = best_of(tu.snopt).lr;
  std::ostringstream os;
  os << "tuned lr adam " << adam_lr << " snopt " << snopt_lr << ";";
  bool all = true;
  double adam_time = 0.0, snopt_time = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Run adam = seed == 0 ? best_of(tu.adam) : run_fixture(spirals_fixture(OptimizerKind::adam, adam_lr, seed));
    const Run sn = seed == 0 ? best_of(tu.snopt) : run_fixture(spirals_fixture(OptimizerKind::snopt, snopt_lr, seed));
    adam_time += adam.seconds_per_iteration;
    snopt_time += sn.seconds_per_iteration;
    const double target = adam.final_loss();
    std::size_t hit = 0;
    bool reached = false;
    if (!sn.aborted)
      for (std::size_t i = 0; i < sn.smoothed.size() && !reached; ++i)
        if (sn.smoothed[i] <= target) {
          hit = i + 1;
          reached = true;
        }
    const std::size_t budget = adam.smoothed.size();
    const bool ok = reached && 2 * hit <= budget;
    all = all && ok;
    os << " seed " << seed << ": adam final " << fmt("%.4f", target) << ", snopt final "
       << fmt("%.4f", sn.final_loss()) << ", reached at " << (reached ? std::to_string(hit) : std::string("never"))
       << "/" << budget << (ok ? "" : " (miss)") << ";";
  }
  const double ratio = snopt_time / adam_time;
  const double t = seconds_since(start);
  os << fmt(" s/iter ratio %.2f (<= 3), %.0f s (< 600 s)", ratio, t);
  return {all && ratio <= 3.0 && t < 600.0, os.str()};
}

Outcome sensitivity_trend() {
  Tuning& tu = tuning();
  const std::vector<Run> sgd = run_grid(OptimizerKind::sgd, kSgdLrGrid, 0);
  const double s_snopt = spread(tu.snopt), s_sgd = spread(sgd);
  std::size_t ab_snopt = 0, ab_sgd = 0;
  for (const auto& r : tu.snopt) ab_snopt += r.aborted;
  for (const auto& r : sgd) ab_sgd += r.aborted;
  return {s_snopt < s_sgd, fmt("final-loss spread snopt %.4f (%zu aborted) vs sgd %.4f (%zu aborted)", s_snopt,
                               ab_snopt, s_sgd, ab_sgd)};
}

// ---- 8 ------------------------------------------------------------------

ExperimentConfig probe_fixture(OptimizerKind kind) {
  ExperimentConfig c;
  c.data.n_per_class = 20;
  c.model.hidden = {8};
  c.model.augment = 1;
  c.optimizer.kind = kind;
  c.optimizer.lr = kind == OptimizerKind::snopt ? 0.1 : 1e-2;
  c.batch_size = 16;
  c.iterations = 3;
  c.grid_samples = 6;
  c.eval_every = c.iterations;
  c.seed = 4;
  return c;
}

Outcome memory_invariance() {
  bool identical = true;
  for (auto kind : {OptimizerKind::adam, OptimizerKind::snopt}) {
    std::vector<MemoryProbe> seen;
    for (double tol : {1e-3, 1e-6, 1e-8}) {
      ExperimentConfig c = probe_fixture(kind);
      c.solver = dopri5(tol);
      for (const auto& p : memory_probe(c)) seen.push_back(p);
    }
    for (const auto& p : seen) identical = identical && p == seen.front();
  }
  // circles with K classes and exact-rank curvature give R = K
  std::vector<std::size_t> peaks, qs;
  for (std::size_t k : {2u, 3u, 4u, 5u}) {
    ExperimentConfig c = probe_fixture(OptimizerKind::snopt);
    c.data.kind = DatasetKind::circles;
    c.data.radii.clear();
    for (std::size_t i = 0; i < k; ++i) c.data.radii.push_back(0.5 + 0.5 * static_cast<double>(i));
    c.optimizer.curvature = CurvatureMode::exact_rank;
    c.iterations = 1;
    const MemoryProbe p = memory_probe(c).front();
    peaks.push_back(p.peak());
    qs.push_back(p.q_elements);
  }
  bool linear = qs[0] > 0;
  for (std::size_t i = 1; i < qs.size(); ++i) {
    linear = linear && qs[i] * 2 == qs[0] * (i + 2);
    if (i >= 2) linear = linear && peaks[i] - peaks[i - 1] == peaks[i - 1] - peaks[i - 2];
  }
  return {identical && linear, fmt("probes identical across rtol {1e-3,1e-6,1e-8}: %s; peak for R=2..5: %zu %zu %zu %zu (%s)",
                                   identical ? "yes" : "no", peaks[0], peaks[1], peaks[2], peaks[3],
                                   linear ? "linear" : "not linear")};
}

// ---- 9 ------------------------------------------------------------------

constexpr std::size_t kHorizonUpdates = 200;
constexpr std::size_t kStationaryWindow = 20;
constexpr double kStationaryBand = 0.05;

ExperimentConfig horizon_fixture(HorizonPolicy policy) {
  ExperimentConfig c;
  c.data.kind = DatasetKind::spirals;
  c.data.n_per_class = 250;
  c.model.hidden = {16};
  c.model.augment = 2;
  c.optimizer.kind = OptimizerKind::adam;
  c.optimizer.lr = 1e-2;
  c.solver.method = Method::rk4;
  c.solver.fixed_step = 0.1;
  c.batch_size = 64;
  c.grid_samples = 11;
  c.horizon.policy = policy;
  c.horizon.c = 0.1;
  c.horizon.lr = 0.1;
  c.horizon.period = 75;
  c.t1 = 1.0;
  c.iterations = c.horizon.period * (kHorizonUpdates + kStationaryWindow);
  c.eval_every = c.iterations;
  c.seed = 0;
  return c;
}

// First update index where |avg Q_T| < 1e-2 and T stays within the band for
// the following window.
std::optional<std::size_t> converged_at(const std::vector<HorizonUpdate>& u) {
  for (std::size_t k = 0; k < std::min(kHorizonUpdates, u.size()); ++k) {
    if (!(std::abs(u[k].avg_q_t) < 1e-2) || k + kStationaryWindow > u.size()) continue;
    double lo = kInf, hi = -kInf;
    for (std::size_t j = k; j < k + kStationaryWindow; ++j) {
      lo = std::min(lo, u[j].t_bar);
      hi = std::max(hi, u[j].t_bar);
    }
    if (hi - lo <= kStationaryBand) return k;
  }
  return std::nullopt;
}

double variance_from(const std::vector<HorizonUpdate>& u, std::size_t k) {
  double mean = 0.0, sq = 0.0;
  const double n = static_cast<double>(u.size() - k);
  for (std::size_t j = k; j < u.size(); ++j) mean += u[j].t_bar / n;
  for (std::size_t j = k; j < u.size(); ++j) sq += (u[j].t_bar - mean) * (u[j].t_bar - mean) / n;
  return sq;
}

Outcome horizon_optimization() {
  const auto start = std::chrono::steady_clock::now();
  const TrainResult so = train(horizon_fixture(HorizonPolicy::second_order), {});
  const TrainResult fo = train(horizon_fixture(HorizonPolicy::first_order), {});
  const TrainResult fixed = train(horizon_fixture(HorizonPolicy::fixed), {});
  const double t = seconds_since(start);
  const auto k = converged_at(so.horizon_updates);
  const double acc_so = so.records.back().test_acc, acc_fixed = fixed.records.back().test_acc;
  const bool acc_ok = std::abs(acc_so - acc_fixed) <= 0.01 + 1e-12;
  std::ostringstream os;
  bool var_ok = false;
  if (k) {
    const double v_so = variance_from(so.horizon_updates, *k), v_fo = variance_from(fo.horizon_updates, *k);
    var_ok = v_so < v_fo;
    os << "converged at update " << *k << " (T " << fmt("%.3f", so.horizon_updates[*k].t_bar)
       << fmt("), post var so %.3e vs fo %.3e;", v_so, v_fo);
  } else {
    os << "no convergence within " << kHorizonUpdates << " updates (final T "
       << fmt("%.3f, avg Q_T %.3e);", so.horizon_updates.back().t_bar, so.horizon_updates.back().avg_q_t);
  }
  os << fmt(" test acc so %.3f vs fixed %.3f (fo %.3f); %.0f s (< 600 s)", acc_so, acc_fixed,
            fo.records.back().test_acc, t);
  return {k.has_value() && var_ok && acc_ok && t < 600.0, os.str()};
}

// ---- 10 -----------------------------------------------------------------

Outcome error_study_trend() {
  const auto rows = default_error_study();
  bool ok = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].curv_error > rows[i].grad_error;
    if (i > 0 && rows[i].method == rows[i - 1].method)
      ok = ok && rows[i].grad_error < rows[i - 1].grad_error && rows[i].curv_error < rows[i - 1].curv_error;
    os << " " << rows[i].label << fmt(" %.1e/%.1e;", rows[i].grad_error, rows[i].curv_error);
  }
  return {ok, "grad/curv error:" + os.str()};
}

// ---- 11 -----------------------------------------------------------------

Outcome weight_decay() {
  const double gamma = 1e-3;
  const MlpSpec spec = MlpSpec::make(2, {4}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, 12);
  SplitMix64 rng(12);
  const auto x1 = random_vector(4, rng);
  std::vector<TerminalCurvature> curv(2);
  for (auto& c : curv) {
    c.grad = random_vector(2, rng);
    c.factors = {random_vector(2, rng), random_vector(2, rng)};
  }
  const auto st = dense_sweep(spec, theta, x1, curv, 0.0, 1.0, dopri5(1e-8));
  ParamVec grad(spec, st.q_u);
  DenseMatrix quu = st.q_uu;
  apply_weight_decay(grad, quu, gamma, theta);

  auto eig = [](const DenseMatrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j)
      for (std::size_t i = 0; i < m.rows(); ++i) e(i, j) = m(i, j);
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e).eigenvalues().eval();
  };
  const Eigen::VectorXd before = eig(st.q_uu), after = eig(quu);
  const double scale = std::max(1.0, before.cwiseAbs().maxCoeff());
  double eig_err = 0.0, grad_err = 0.0;
  for (Eigen::Index i = 0; i < before.size(); ++i) eig_err = std::max(eig_err, std::abs(after(i) - before(i) - gamma));
  for (std::size_t i = 0; i < theta.size(); ++i) grad_err = std::max(grad_err, std::abs(grad[i] - (st.q_u[i] + gamma * theta[i])));

  KroneckerFactors f;
  ParamVec g2(spec, st.q_u);
  apply_weight_decay(g2, f, gamma, theta);
  const bool kron_ok = f.damping == gamma && g2 == grad;
  const double tol = 64 * std::numeric_limits<double>::epsilon() * scale;
  return {eig_err <= tol && grad_err == 0.0 && kron_ok,
          fmt("max |shift - 1e-3| %.2e (<= %.1e), gradient diff %.1e, factor damping %s", eig_err, tol, grad_err,
              kron_ok ? "ok" : "wrong")};
}

}  // namespace

int main() {
  std::set<int> only;
  if (const char* s = std::getenv("SNOPT_ACCEPTANCE_ONLY")) {
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"dense curvature", dense_curvature},
      {"low-rank equivalence", lowrank_equivalence},
      {"kronecker degenerate exactness", kronecker_exactness},
      {"eigenbasis update identity", eigenbasis_identity},
      {"convergence trend", convergence_trend},
      {"sensitivity trend", sensitivity_trend},
      {"memory invariance", memory_invariance},
      {"horizon optimization", horizon_optimization},
      {"error-study trend", error_study_trend},
      {"weight decay", weight_decay},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
