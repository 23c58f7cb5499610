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

// First-order backward pass: the augmented adjoint system
//
//   dx/dt = F,   da/dt = -F_x^T a,   dg/dt = -mean_b F_theta^T a_b
//
// integrated from t1 down to t0 with g(t1) = 0, so g(t0) is dL/dtheta.
// Working memory is one flat vector of length 2Bm + n regardless of how many
// steps the solver takes.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

struct AdjointState {
  std::vector<double> x;  // B x m
  std::vector<double> a;  // B x m, Q_x
  std::vector<double> g;  // n, Q_u accumulator

  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(x.size() + a.size() + g.size());
    v.insert(v.end(), x.begin(), x.end());
    v.insert(v.end(), a.begin(), a.end());
    v.insert(v.end(), g.begin(), g.end());
    return v;
  }

  static AdjointState unflatten(std::span<const double> v, std::size_t state_len, std::size_t num_params) {
    if (v.size() != 2 * state_len + num_params) throw DimensionMismatch("AdjointState: length != 2N + n");
    AdjointState s;
    s.x.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(state_len));
    s.a.assign(v.begin() + static_cast<std::ptrdiff_t>(state_len),
               v.begin() + static_cast<std::ptrdiff_t>(2 * state_len));
    s.g.assign(v.begin() + static_cast<std::ptrdiff_t>(2 * state_len), v.end());
    return s;
  }
};

struct AdjointOptions {
  bool semi_norm = true;  // error norm over [x, a] only
  // Mutation hook for the verification suite: negates the parameter
  // integrand. Never set in training.
  bool flip_integrand_sign = false;
};

struct AdjointResult {
  ParamVec grad;
  std::vector<double> x0;  // reconstructed by the backward state replay
  std::vector<double> a0;
  SolveReport report;
};

namespace detail {

inline std::size_t batch_size_of(const MlpSpec& spec, std::span<const double> x, const char* who) {
  const std::size_t m = spec.state_dim();
  if (m == 0 || x.empty() || x.size() % m != 0)
    throw DimensionMismatch(std::string(who) + ": state length is not a multiple of the state dim");
  return x.size() / m;
}

}  // namespace detail

// Forward flow of a sample-major batch (B x m) from t0 to t1; the report's
// terminal_state is x(t1).
inline SolveReport forward_solve(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x0, double t0,
                                 double t1, SolverConfig cfg) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = detail::batch_size_of(spec, x0, "forward_solve");
  cfg.error_norm = ErrorNorm::full;
  MlpEvaluator ev(spec, theta);
  auto field = [&](double t, std::span<const double> y, std::span<double> dy) {
    for (std::size_t b = 0; b < batch; ++b) ev.forward(t, y.subspan(b * m, m), dy.subspan(b * m, m));
  };
  return odesolve(x0, t0, t1, field, cfg);
}

// x1 and a1 are sample-major batches (B x m); a1 holds the per-sample
// terminal adjoints Phi_x(x1_b). The parameter accumulator is mean-reduced.
inline AdjointResult adjoint_gradient(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x1,
                                      std::span<const double> a1, double t0, double t1, SolverConfig cfg,
                                      const AdjointOptions& opts = {}) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = detail::batch_size_of(spec, x1, "adjoint_gradient");
  if (a1.size() != x1.size()) throw DimensionMismatch("adjoint_gradient: |a1| != |x1|");
  const std::size_t N = batch * m;
  const std::size_t n = theta.size();

  AdjointState init{{x1.begin(), x1.end()}, {a1.begin(), a1.end()}, std::vector<double>(n, 0.0)};
  const std::vector<double> y1 = init.flatten();

  if (opts.semi_norm) {
    cfg.error_norm = ErrorNorm::semi;
    cfg.semi_prefix = 2 * N;
  }

  MlpEvaluator ev(spec, theta);
  std::vector<double> vjp(m);
  const double scale = (opts.flip_integrand_sign ? 1.0 : -1.0) / static_cast<double>(batch);
  auto field = [&](double t, std::span<const double> y, std::span<double> dy) {
    auto dg = dy.subspan(2 * N, n);
    std::fill(dg.begin(), dg.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      ev.forward(t, y.subspan(b * m, m), dy.subspan(b * m, m));
      ev.backward(y.subspan(N + b * m, m), vjp, dg, scale);
      for (std::size_t i = 0; i < m; ++i) dy[N + b * m + i] = -vjp[i];
    }
  };

  SolveReport rep = odesolve(y1, t1, t0, field, cfg);
  AdjointState s0 = AdjointState::unflatten(rep.terminal_state, N, n);
  AdjointResult res{ParamVec(spec, std::move(s0.g)), std::move(s0.x), std::move(s0.a), std::move(rep)};
  return res;
}

}  // namespace snopt
