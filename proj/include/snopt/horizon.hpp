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

// Optimization of the integration bound T (= t1) under the penalized
// terminal cost Phi(x(T)) + c/2 T^2 with a Gauss-Newton terminal Hessian.
// With s = Phi_x^T F(T, x(T)) the derivatives at t0 reduce to
//
//   Q_T = c T + s,   Q_TT = c + s^2,   Q_Tu = s Q_u^T,
//
// all available from the terminal point, so no extra backward state is
// needed. Each iteration feeds these into exponential moving averages and
// every `period` iterations the bound moves by
//
//   dT = Q_TT^-1 (Q_T + Q_Tu dtheta),   T <- clamp(T - lr dT, T_min, T_max).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/numerics.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

struct HorizonTerms {
  double q_t = 0.0;
  double q_tt = 0.0;
  std::vector<double> q_tu;  // s * Q_u
  double s = 0.0;            // Phi_x^T F at the terminal point (batch mean)
  std::vector<double> grad;  // Q_u(t0)
};

struct HorizonState {
  double t_bar = 1.0;
  double c = 0.1;        // quadratic penalty weight
  double lr = 1.0;       // horizon step size
  std::size_t period = 75;
  double ema = 0.9;
  double t_min = 0.05;
  double t_max = 2.0;
  double avg_q_t = 0.0;
  double avg_q_tt = 0.0;
  double avg_s = 0.0;
  std::size_t observations = 0;

  void validate() const {
    if (!(c >= 0.0)) throw ConfigError("horizon: c must be >= 0");
    if (!(t_min > 0.0 && t_max > t_min)) throw ConfigError("horizon: need 0 < t_min < t_max");
    if (period < 1) throw ConfigError("horizon: period must be >= 1");
    if (!(ema >= 0.0 && ema < 1.0)) throw ConfigError("horizon: ema must be in [0, 1)");
  }
};

// x1 and phi_grad are sample-major (B x m); phi_grad holds the per-sample
// Phi_x, and s is their batch mean against the terminal field.
inline HorizonTerms horizon_terms(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x1,
                                  std::span<const double> phi_grad, const ParamVec& grad, double t_bar, double c) {
  const std::size_t m = spec.state_dim();
  if (x1.empty() || x1.size() % m != 0 || phi_grad.size() != x1.size())
    throw DimensionMismatch("horizon_terms: batch shape");
  const std::size_t batch = x1.size() / m;
  MlpEvaluator ev(spec, theta);
  std::vector<double> f(m);
  double s = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    ev.forward(t_bar, x1.subspan(b * m, m), f);
    s += dot(phi_grad.subspan(b * m, m), f);
  }
  s /= static_cast<double>(batch);
  HorizonTerms terms;
  terms.s = s;
  terms.q_t = c * t_bar + s;
  terms.q_tt = c + s * s;
  terms.grad.assign(grad.values().begin(), grad.values().end());
  terms.q_tu = terms.grad;
  for (double& v : terms.q_tu) v *= s;
  return terms;
}

inline void observe(HorizonState& st, const HorizonTerms& terms) {
  if (st.observations == 0) {
    st.avg_q_t = terms.q_t;
    st.avg_q_tt = terms.q_tt;
    st.avg_s = terms.s;
  } else {
    st.avg_q_t = st.ema * st.avg_q_t + (1.0 - st.ema) * terms.q_t;
    st.avg_q_tt = st.ema * st.avg_q_tt + (1.0 - st.ema) * terms.q_tt;
    st.avg_s = st.ema * st.avg_s + (1.0 - st.ema) * terms.s;
  }
  ++st.observations;
}

// Second-order feedback step. `delta_theta` is the parameter change applied
// in the same iteration. A non-positive curvature average (c = 0 and s = 0)
// suppresses the update.
inline double horizon_step(HorizonState& st, const HorizonTerms& terms, std::span<const double> delta_theta) {
  st.validate();
  if (!std::isfinite(st.avg_q_t) || !std::isfinite(st.avg_q_tt) || !std::isfinite(st.avg_s))
    throw NonFiniteUpdate("horizon_step: non-finite moving averages");
  if (!(st.avg_q_tt > 0.0)) return st.t_bar;
  const double feedback = delta_theta.empty() ? 0.0 : st.avg_s * dot(terms.grad, delta_theta);
  const double dT = (st.avg_q_t + feedback) / st.avg_q_tt;
  if (!std::isfinite(dT)) throw NonFiniteUpdate("horizon_step: non-finite step");
  st.t_bar = std::clamp(st.t_bar - st.lr * dT, st.t_min, st.t_max);
  return st.t_bar;
}

// Plain gradient step on T.
inline double first_order_horizon_step(HorizonState& st, double q_t) {
  st.validate();
  if (!std::isfinite(q_t)) throw NonFiniteUpdate("first_order_horizon_step: non-finite Q_T");
  st.t_bar = std::clamp(st.t_bar - st.lr * q_t, st.t_min, st.t_max);
  return st.t_bar;
}

}  // namespace snopt
