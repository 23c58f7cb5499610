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

// The oracle suite behind `snopt-kit verify`: every check compares a
// production path against an independent reference and reports the error
// next to its tolerance.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "snopt/adjoint.hpp"
#include "snopt/curvature.hpp"
#include "snopt/data.hpp"
#include "snopt/kfac.hpp"
#include "snopt/loss.hpp"
#include "snopt/numerics.hpp"
#include "snopt/optimizer.hpp"
#include "snopt/oracle.hpp"
#include "snopt/rng.hpp"

namespace snopt {

struct VerifyOptions {
  double tol_scale = 1.0;     // multiplies every tolerance
  bool flip_sign = false;     // mutation: flip the sign of the adjoint integrand
  std::uint64_t seed = 7;
};

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

namespace detail {

inline CheckResult make_check(std::string name, double err, double tol) {
  return {std::move(name), err, tol, std::isfinite(err) && err < tol};
}

inline DenseMatrix random_spd(std::size_t n, SplitMix64& rng) {
  DenseMatrix q(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) q(i, j) = rng.normal();
  DenseMatrix a = q * q.transpose();
  for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
  return a;
}

inline std::vector<double> random_vector(std::size_t n, SplitMix64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// First `batch` training points of a small spirals set, as a flat B x 2 state.
inline std::vector<double> spiral_batch(std::size_t batch, std::uint64_t seed, std::vector<Target>& targets) {
  const Dataset ds = make_spirals(batch, 0.05, seed);
  std::vector<double> x;
  targets.clear();
  for (std::size_t b = 0; b < batch; ++b) {
    x.insert(x.end(), ds.train.inputs[b].begin(), ds.train.inputs[b].end());
    targets.push_back(ds.train.targets[b]);
  }
  return x;
}

inline SolverConfig dopri5_config(double tol) {
  SolverConfig c;
  c.rtol = c.atol = tol;
  return c;
}

}  // namespace detail

// Standard error-study fixture: 2-8-2 tanh field on a batch of spiral
// points, dopri5 over a tolerance ladder and rk4 over a step ladder. Finer
// rk4 steps are left out; their errors sit on the finite-difference floor.
inline std::vector<SolverSetting> error_study_solvers() {
  std::vector<SolverSetting> s;
  for (double t : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) s.push_back(dopri5_setting(t));
  for (double h : {0.2, 0.1, 0.05}) s.push_back(rk4_setting(h));
  return s;
}

inline std::vector<ErrorStudyRow> default_error_study(std::uint64_t seed = 5, std::size_t batch = 8) {
  const MlpSpec spec = MlpSpec::make(2, {8}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, seed);
  std::vector<Target> targets;
  const auto x0 = detail::spiral_batch(batch, seed, targets);
  const LossProblem loss{LossKind::softmax_ce, nullptr, targets};
  const auto solvers = error_study_solvers();
  return error_study(spec, theta, x0, loss, solvers);
}

// Adjoint gradient of a 2-8-8-2 tanh field on 16 spiral points against
// central differences of the full loss (rk4, h = 1e-2).
inline CheckResult check_gradient(const VerifyOptions& o = {}) {
  const MlpSpec spec = MlpSpec::make(2, {8, 8}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, o.seed);
  std::vector<Target> targets;
  const auto x0 = detail::spiral_batch(16, o.seed, targets);
  const SolverConfig cfg = rk4_reference(1e-2);
  const LossProblem loss{LossKind::softmax_ce, nullptr, targets};

  const auto x1 = forward_solve(spec, theta, x0, 0.0, 1.0, cfg).terminal_state;
  const auto a1 = evaluate_batch(loss.kind, nullptr, targets, x1, 2, true).grads;
  AdjointOptions ao;
  ao.flip_integrand_sign = o.flip_sign;
  const auto adj = adjoint_gradient(spec, theta, x1, a1, 0.0, 1.0, cfg, ao);
  const auto fd = fd_gradient(
      [&](const ParamVec& p) { return loss.mean_loss(forward_solve(spec, p, x0, 0.0, 1.0, cfg).terminal_state, 2); },
      theta, 1e-5);
  return detail::make_check("adjoint gradient vs finite differences", relative_error(adj.grad.values(), fd.values()),
                            1e-4 * o.tol_scale);
}

// Dense Q_uu(t0) on a 2-4-2 tanh field against J^T Phi_xx J with J from
// central differences of a fine fixed-step flow.
inline CheckResult check_dense_curvature(const VerifyOptions& o = {}) {
  const MlpSpec spec = MlpSpec::make(2, {4}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, o.seed + 1);
  std::vector<Target> targets;
  const auto x0 = detail::spiral_batch(2, o.seed + 1, targets);
  const LossProblem loss{LossKind::softmax_ce, nullptr, targets};
  const SolverConfig cfg = detail::dopri5_config(1e-8);

  const auto x1 = forward_solve(spec, theta, x0, 0.0, 1.0, cfg).terminal_state;
  const auto curv = loss.curvature(x1, 2, 0.0, 1.0, CurvatureMode::exact_rank);
  const auto dense = dense_sweep(spec, theta, x1, curv, 0.0, 1.0, cfg);
  const DenseMatrix J = fd_flow_jacobian(spec, theta, x0, 0.0, 1.0, rk4_reference(1e-3), 1e-5);
  return detail::make_check("dense curvature vs J^T Phi_xx J", relative_error(dense.q_uu, gauss_newton_reference(J, curv)),
                            1e-3 * o.tol_scale);
}

// dx/dt = theta x, x(0) = 1, Phi = x^2 at theta = 0: d2 Phi / d theta2 = 2.
inline CheckResult check_linear_curvature(const VerifyOptions& o = {}) {
  MlpSpec spec{{1, 1}, {Activation::identity}, TimeInput::none};
  const ParamVec theta = ParamVec::zeros(spec);
  const SolverConfig cfg = detail::dopri5_config(1e-8);
  const std::vector<double> x0{1.0};
  const auto x1 = forward_solve(spec, theta, x0, 0.0, 1.0, cfg).terminal_state;
  TerminalCurvature c;
  c.grad = {2.0 * x1[0]};
  c.factors = {{std::sqrt(2.0)}};
  const auto dense = dense_sweep(spec, theta, x1, std::span<const TerminalCurvature>(&c, 1), 0.0, 1.0, cfg);
  return detail::make_check("scalar linear curvature = 2", std::abs(dense.q_uu(0, 0) - 2.0), 1e-6 * o.tol_scale);
}

// Low-rank reconstructions against the dense sweep for R in {1, 2, m}.
inline CheckResult check_lowrank(const VerifyOptions& o = {}) {
  SplitMix64 rng(derive_seed(o.seed, 11));
  const SolverConfig cfg = detail::dopri5_config(1e-10);
  double worst = 0.0;
  const MlpSpec spec = MlpSpec::make(2, {4}, Activation::tanh);
  for (std::size_t R : {std::size_t{1}, std::size_t{2}, spec.state_dim()}) {
    const ParamVec theta = ParamVec::glorot(spec, rng.next_u64());
    const auto x1 = detail::random_vector(2, rng);
    TerminalCurvature c;
    c.grad = detail::random_vector(2, rng);
    for (std::size_t i = 0; i < R; ++i) c.factors.push_back(detail::random_vector(2, rng));
    const std::span<const TerminalCurvature> cs(&c, 1);
    const auto dense = dense_sweep(spec, theta, x1, cs, 0.0, 1.0, cfg);
    const auto low = lowrank_sweep(spec, theta, x1, cs, 0.0, 1.0, cfg);
    worst = std::max({worst, relative_error(low.q_xx(), dense.q_xx), relative_error(low.q_xu(), dense.q_xu),
                      relative_error(assemble_quu(low), dense.q_uu)});
  }
  return detail::make_check("low-rank vs dense curvature", worst, 1e-6 * o.tol_scale);
}

// One sample, one grid point, R = 1: kron(A, B) is the exact layer outer
// product of z (with the bias 1) and g.
inline CheckResult check_kronecker_exactness(const VerifyOptions& o = {}) {
  const MlpSpec spec = MlpSpec::make(2, {5}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, o.seed + 3);
  SplitMix64 rng(derive_seed(o.seed, 13));
  const auto x1 = detail::random_vector(2, rng);
  TerminalCurvature c;
  c.grad = detail::random_vector(2, rng);
  c.factors = {detail::random_vector(2, rng)};
  TimeGrid grid;
  grid.times = {1.0};
  grid.dt = 1.0;
  const auto sw = accumulate_factors(spec, theta, x1, std::span<const TerminalCurvature>(&c, 1), grid, SolverConfig{});

  MlpEvaluator ev(spec, theta);
  std::vector<double> out(2);
  ev.forward(1.0, x1, out);
  ev.backward(c.factors[0], {}, {});
  double worst = 0.0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    std::vector<double> z(ev.layer_input(l).begin(), ev.layer_input(l).end());
    z.push_back(1.0);
    const auto g = ev.layer_g(l);
    std::vector<double> zg;
    for (double zi : z)
      for (double gj : g) zg.push_back(zi * gj);
    const DenseMatrix exact = DenseMatrix::outer(zg, zg);
    worst = std::max(worst, relative_error(kron(sw.factors.layers[l].a, sw.factors.layers[l].b), exact));
  }
  return detail::make_check("kronecker degenerate exactness", worst, 1e-10 * o.tol_scale);
}

// snopt_step with alpha = 0 against the dense eigenbasis formula.
inline CheckResult check_eigenbasis_identity(const VerifyOptions& o = {}) {
  SplitMix64 rng(derive_seed(o.seed, 17));
  double worst = 0.0;
  for (std::size_t in = 1; in <= 7; in += 3) {
    for (std::size_t out = 1; out <= 8; out += 3) {
      MlpSpec spec{{in, out}, {Activation::identity}, TimeInput::none};
      const ParamVec theta = ParamVec::glorot(spec, rng.next_u64());
      ParamVec grad(spec, detail::random_vector(spec.num_params(), rng));
      KroneckerFactors f;
      f.layers.push_back({detail::random_spd(in + 1, rng), detail::random_spd(out, rng)});
      SnoptState st;
      st.alpha = 0.0;
      st.eps = 0.05;
      st.lr = 1.0;
      const ParamVec next = snopt_step(st, f, grad, theta);

      const DenseMatrix U = kron(sym_eigen(f.layers[0].a).eigenvectors, sym_eigen(f.layers[0].b).eigenvectors);
      const auto x = U.transpose() * grad.values();
      std::vector<double> scaled(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) scaled[k] = x[k] / (x[k] * x[k] + st.eps);
      const auto delta = U * std::span<const double>(scaled);
      std::vector<double> got(theta.size());
      for (std::size_t k = 0; k < got.size(); ++k) got[k] = theta[k] - next[k];
      worst = std::max(worst, relative_error(got, delta));
    }
  }
  return detail::make_check("eigenbasis update vs dense assembly", worst, 1e-8 * o.tol_scale);
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& o = {}) {
  return {check_gradient(o), check_dense_curvature(o), check_linear_curvature(o), check_lowrank(o),
          check_kronecker_exactness(o), check_eigenbasis_identity(o)};
}

inline void print_checks(const std::vector<CheckResult>& checks, std::ostream& os) {
  for (const auto& c : checks)
    os << (c.pass ? "PASS " : "FAIL ") << c.name << ": error " << c.error << " (tolerance " << c.tolerance << ")\n";
}

}  // namespace snopt
