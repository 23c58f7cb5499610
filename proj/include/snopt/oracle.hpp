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

// Brute-force reference computations: central finite differences of losses
// and flows, and the solver error study built on them. Intended for tanh
// fields only; relu kinks break the difference quotients.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "snopt/adjoint.hpp"
#include "snopt/curvature.hpp"
#include "snopt/errors.hpp"
#include "snopt/loss.hpp"
#include "snopt/numerics.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

// (f(theta + h e_i) - f(theta - h e_i)) / 2h for every coordinate.
template <class LossFn>
std::vector<double> fd_gradient(LossFn&& lossfn, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_gradient: h must be > 0");
  std::vector<double> probe(theta.begin(), theta.end());
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = lossfn(std::span<const double>(probe));
    probe[i] = theta[i] - h;
    const double fm = lossfn(std::span<const double>(probe));
    probe[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Same, for callables taking a ParamVec.
template <class LossFn>
ParamVec fd_gradient(LossFn&& lossfn, const ParamVec& theta, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_gradient: h must be > 0");
  ParamVec probe = theta;
  ParamVec g = theta;
  g.fill(0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = lossfn(static_cast<const ParamVec&>(probe));
    probe[i] = theta[i] - h;
    const double fm = lossfn(static_cast<const ParamVec&>(probe));
    probe[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// J_ij = d x(t1)_i / d theta_j by central differences of the flow. x0 is a
// sample-major batch, so J has B*m rows.
inline DenseMatrix fd_flow_jacobian(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x0, double t0,
                                    double t1, const SolverConfig& cfg, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_flow_jacobian: h must be > 0");
  DenseMatrix J(x0.size(), theta.size());
  ParamVec probe = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + h;
    const auto xp = forward_solve(spec, probe, x0, t0, t1, cfg).terminal_state;
    probe[j] = theta[j] - h;
    const auto xm = forward_solve(spec, probe, x0, t0, t1, cfg).terminal_state;
    probe[j] = theta[j];
    for (std::size_t i = 0; i < x0.size(); ++i) J(i, j) = (xp[i] - xm[i]) / (2.0 * h);
  }
  return J;
}

// Stacked factors Y_i (length B*m) of the terminal curvature of a batch.
inline std::vector<std::vector<double>> stacked_factors(std::span<const TerminalCurvature> curv) {
  if (curv.empty()) return {};
  const std::size_t R = curv.front().rank();
  const std::size_t m = curv.front().grad.size();
  std::vector<std::vector<double>> Y(R, std::vector<double>(curv.size() * m));
  for (std::size_t b = 0; b < curv.size(); ++b) {
    if (curv[b].rank() != R) throw DimensionMismatch("stacked_factors: ranks differ across the batch");
    for (std::size_t i = 0; i < R; ++i)
      std::copy(curv[b].factors[i].begin(), curv[b].factors[i].end(), Y[i].begin() + static_cast<std::ptrdiff_t>(b * m));
  }
  return Y;
}

// J^T Phi_xx J / B^2 with Phi_xx = sum_i Y_i Y_i^T, the quantity both
// curvature sweeps compute for a mean-reduced batch.
inline DenseMatrix gauss_newton_reference(const DenseMatrix& J, std::span<const TerminalCurvature> curv) {
  const auto Y = stacked_factors(curv);
  const double s = 1.0 / static_cast<double>(curv.size());
  DenseMatrix out(J.cols(), J.cols());
  const DenseMatrix Jt = J.transpose();
  for (const auto& y : Y) {
    auto p = Jt * std::span<const double>(y);
    for (double& v : p) v *= s;
    out.add_outer(p, p);
  }
  return out;
}

// The loss side of an error-study or verification problem.
struct LossProblem {
  LossKind kind = LossKind::softmax_ce;
  const Readout* readout = nullptr;
  std::vector<Target> targets;  // one per sample

  double mean_loss(std::span<const double> x1, std::size_t m) const {
    return evaluate_batch(kind, readout, targets, x1, m, false).loss;
  }
  std::vector<TerminalCurvature> curvature(std::span<const double> x1, std::size_t m, double t0, double t1,
                                           CurvatureMode mode) const {
    std::vector<TerminalCurvature> c;
    for (std::size_t b = 0; b < targets.size(); ++b)
      c.push_back(terminal_curvature(TerminalLoss{kind, targets[b], readout}, x1.subspan(b * m, m), t0, t1, mode));
    return c;
  }
};

struct SolverSetting {
  std::string label;
  SolverConfig cfg;
};

struct ErrorStudyRow {
  std::string label;
  Method method = Method::dopri5;
  double tolerance = 0.0;  // rtol (= atol) for dopri5, step size for fixed-step
  double grad_error = 0.0;
  double curv_error = 0.0;
  std::size_t nfe_fwd = 0;
  std::size_t nfe_bwd = 0;
};

inline SolverConfig rk4_reference(double h) {
  SolverConfig c;
  c.method = Method::rk4;
  c.fixed_step = h;
  return c;
}

struct ErrorStudyOptions {
  double t0 = 0.0;
  double t1 = 1.0;
  double fd_h = 1e-5;
  // Reference flow for the oracles: fixed-step, so the flow is smooth in theta
  // and the difference quotients are not polluted by step-size switching.
  SolverConfig reference = rk4_reference(1e-3);
};

inline SolverSetting dopri5_setting(double tol) {
  SolverConfig c;
  c.method = Method::dopri5;
  c.rtol = c.atol = tol;
  std::ostringstream os;
  os << "dopri5 tol=" << tol;
  return {os.str(), c};
}

inline SolverSetting rk4_setting(double h) {
  SolverConfig c;
  c.method = Method::rk4;
  c.fixed_step = h;
  std::ostringstream os;
  os << "rk4 h=" << h;
  return {os.str(), c};
}

namespace detail {

struct SampleErrors {
  std::vector<double> grad, curv;
  std::vector<std::size_t> nfe_fwd, nfe_bwd;
};

inline SampleErrors error_study_one(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x0,
                                    const LossProblem& loss, std::span<const SolverSetting> solvers,
                                    const ErrorStudyOptions& opt) {
  const std::size_t m = spec.state_dim();
  const auto& ref = opt.reference;
  auto full_loss = [&](const ParamVec& th) {
    return loss.mean_loss(forward_solve(spec, th, x0, opt.t0, opt.t1, ref).terminal_state, m);
  };
  const ParamVec g_ref = fd_gradient(full_loss, theta, opt.fd_h);
  const auto x1_ref = forward_solve(spec, theta, x0, opt.t0, opt.t1, ref).terminal_state;
  const auto curv_ref = loss.curvature(x1_ref, m, opt.t0, opt.t1, CurvatureMode::exact_rank);
  const DenseMatrix J = fd_flow_jacobian(spec, theta, x0, opt.t0, opt.t1, ref, opt.fd_h);
  const DenseMatrix quu_ref = gauss_newton_reference(J, curv_ref);

  SampleErrors out;
  for (const auto& s : solvers) {
    const SolveReport fwd = forward_solve(spec, theta, x0, opt.t0, opt.t1, s.cfg);
    const auto& x1 = fwd.terminal_state;
    const auto curv = loss.curvature(x1, m, opt.t0, opt.t1, CurvatureMode::exact_rank);
    std::vector<double> a1;
    for (const auto& c : curv) a1.insert(a1.end(), c.grad.begin(), c.grad.end());
    const AdjointResult adj = adjoint_gradient(spec, theta, x1, a1, opt.t0, opt.t1, s.cfg);
    const LowRankCurvatureState lr = lowrank_sweep(spec, theta, x1, curv, opt.t0, opt.t1, s.cfg);
    out.grad.push_back(relative_error(adj.grad.values(), g_ref.values()));
    out.curv.push_back(relative_error(assemble_quu(lr), quu_ref));
    out.nfe_fwd.push_back(fwd.nfe);
    out.nfe_bwd.push_back(adj.report.nfe);
  }
  return out;
}

}  // namespace detail

// For each solver setting: relative L2 error of the adjoint gradient against
// fd_gradient, and relative Frobenius error of the low-rank Q_uu against
// J^T Phi_xx J, with both oracles computed on the reference flow. Errors are
// taken per sample and averaged over the samples, so cancellation inside a
// batch-mean gradient does not distort the first-order column. NFE columns
// are summed over the samples.
inline std::vector<ErrorStudyRow> error_study(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x0,
                                              const LossProblem& loss, std::span<const SolverSetting> solvers,
                                              const ErrorStudyOptions& opt = {}) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = loss.targets.size();
  if (batch == 0 || x0.size() != batch * m) throw DimensionMismatch("error_study: |x0| != B * m");

  std::vector<ErrorStudyRow> rows(solvers.size());
  for (std::size_t k = 0; k < solvers.size(); ++k) {
    rows[k].label = solvers[k].label;
    rows[k].method = solvers[k].cfg.method;
    rows[k].tolerance = solvers[k].cfg.method == Method::dopri5 ? solvers[k].cfg.rtol : solvers[k].cfg.fixed_step.value_or(0.0);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const LossProblem one{loss.kind, loss.readout, {loss.targets[b]}};
    const auto e = detail::error_study_one(spec, theta, x0.subspan(b * m, m), one, solvers, opt);
    for (std::size_t k = 0; k < solvers.size(); ++k) {
      rows[k].grad_error += inv * e.grad[k];
      rows[k].curv_error += inv * e.curv[k];
      rows[k].nfe_fwd += e.nfe_fwd[k];
      rows[k].nfe_bwd += e.nfe_bwd[k];
    }
  }
  return rows;
}

inline void write_error_study_csv(std::span<const ErrorStudyRow> rows, std::ostream& os) {
  os << "solver,method,tolerance,grad_rel_error,curv_rel_error,nfe_fwd,nfe_bwd\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << '"' << r.label << "\"," << to_string(r.method) << ',' << r.tolerance << ',' << r.grad_error << ','
       << r.curv_error << ',' << r.nfe_fwd << ',' << r.nfe_bwd << '\n';
}

inline void write_error_study_markdown(std::span<const ErrorStudyRow> rows, std::ostream& os) {
  os << "| solver | first-order rel. error | second-order rel. error | NFE fwd | NFE bwd |\n"
     << "|---|---|---|---|---|\n";
  os << std::scientific << std::setprecision(3);
  for (const auto& r : rows)
    os << "| " << r.label << " | " << r.grad_error << " | " << r.curv_error << " | " << r.nfe_fwd << " | "
       << r.nfe_bwd << " |\n";
  os << std::defaultfloat;
}

}  // namespace snopt
