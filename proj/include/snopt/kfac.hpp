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

// Kronecker factors collected along the backward pass.
//
// The backward state [x, Q_x, q_1..q_R, Q_u] is solved segment by segment
// between consecutive points of a uniform grid running from t1 down to t0.
// At every grid point (endpoints included) one fresh evaluation of the field
// gives, per layer n,
//
//   A_n(t) = mean_b [z;1][z;1]^T,   B_n(t) = mean_b sum_i g_i g_i^T,
//   g_i = (dF/dh^n)^T q_i,
//
// and the factors are accumulated as A_n += A_n(t) dt, B_n += B_n(t) dt.
// The constant 1 appended to z puts the bias into the layer's Kronecker
// block, matching the vec([W b]) parameter layout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "snopt/adjoint.hpp"
#include "snopt/curvature.hpp"
#include "snopt/errors.hpp"
#include "snopt/loss.hpp"
#include "snopt/numerics.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

struct TimeGrid {
  std::vector<double> times;  // descending, times.front() == t1
  double dt = 0.0;
};

inline TimeGrid make_grid(double t0, double t1, std::size_t samples) {
  if (samples < 2) throw BadInterval("make_grid: need at least 2 samples");
  if (!(t1 > t0)) throw BadInterval("make_grid: requires t1 > t0");
  TimeGrid g;
  g.dt = (t1 - t0) / static_cast<double>(samples - 1);
  g.times.resize(samples);
  for (std::size_t j = 0; j < samples; ++j) g.times[j] = t1 - static_cast<double>(j) * g.dt;
  g.times.back() = t0;
  return g;
}

struct LayerFactors {
  DenseMatrix a;  // (in + 1) x (in + 1)
  DenseMatrix b;  // out x out
};

struct KroneckerFactors {
  std::vector<LayerFactors> layers;
  double dt = 0.0;
  std::vector<double> grid;
  // Spectral shift added by apply_weight_decay; the update treats the
  // preconditioner as (A (x) B) + damping * I.
  double damping = 0.0;

  std::size_t num_elements() const noexcept {
    std::size_t s = 0;
    for (const auto& l : layers) s += l.a.size() + l.b.size();
    return s;
  }
};

struct FactorSweepResult {
  KroneckerFactors factors;
  ParamVec grad;            // Q_u(t0), same ODE as the adjoint gradient
  std::vector<double> x0;   // reconstructed x(t0)
  std::vector<double> a0;   // Q_x(t0)
  SolveReport report;       // aggregated over all segments
};

// Adds the contribution of one grid point to `factors` using the current
// backward state `y` (layout x | Q_x | q_1..q_R | ...).
inline void accumulate_grid_point(MlpEvaluator& ev, double t, std::span<const double> y, std::size_t batch,
                                  std::size_t R, double weight, KroneckerFactors& factors) {
  const std::size_t m = ev.state_dim();
  const std::size_t N = batch * m;
  const auto& segs = ev.theta().segments();
  std::vector<double> out(m), zt;
  const double w = weight / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    ev.forward(t, y.subspan(b * m, m), out);
    for (std::size_t l = 0; l < segs.size(); ++l) {
      const auto z = ev.layer_input(l);
      zt.assign(z.begin(), z.end());
      zt.push_back(1.0);
      factors.layers[l].a.add_outer(zt, zt, w);
    }
    for (std::size_t i = 0; i < R; ++i) {
      ev.backward(y.subspan((2 + i) * N + b * m, m), {}, {});
      for (std::size_t l = 0; l < segs.size(); ++l) {
        const auto g = ev.layer_g(l);
        factors.layers[l].b.add_outer(g, g, w);
      }
    }
  }
}

inline FactorSweepResult accumulate_factors(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x1,
                                            std::span<const TerminalCurvature> curv, const TimeGrid& grid,
                                            SolverConfig cfg, bool semi_norm = true) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = detail::batch_size_of(spec, x1, "accumulate_factors");
  if (curv.size() != batch) throw DimensionMismatch("accumulate_factors: one terminal curvature per sample required");
  if (grid.times.empty()) throw BadInterval("accumulate_factors: empty grid");
  const std::size_t R = detail::common_rank(curv, m);
  const std::size_t N = batch * m;
  const std::size_t n = theta.size();
  const std::size_t o_u = (2 + R) * N;
  const double scale = -1.0 / static_cast<double>(batch);

  std::vector<double> y(o_u + n, 0.0);
  std::copy(x1.begin(), x1.end(), y.begin());
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(curv[b].grad.begin(), curv[b].grad.end(), y.begin() + static_cast<std::ptrdiff_t>(N + b * m));
    for (std::size_t i = 0; i < R; ++i)
      std::copy(curv[b].factors[i].begin(), curv[b].factors[i].end(),
                y.begin() + static_cast<std::ptrdiff_t>((2 + i) * N + b * m));
  }

  if (semi_norm) {
    cfg.error_norm = ErrorNorm::semi;
    cfg.semi_prefix = o_u;
  }

  FactorSweepResult res;
  res.factors.dt = grid.dt;
  res.factors.grid = grid.times;
  for (const auto& s : theta.segments()) res.factors.layers.push_back({DenseMatrix(s.in + 1, s.in + 1), DenseMatrix(s.out, s.out)});

  MlpEvaluator ev(spec, theta);
  std::vector<double> vjp(m);
  auto field = [&](double t, std::span<const double> yy, std::span<double> dy) {
    auto du = dy.subspan(o_u, n);
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      ev.forward(t, yy.subspan(b * m, m), dy.subspan(b * m, m));
      // Q_x feeds the gradient accumulator; the q_i only propagate.
      ev.backward(yy.subspan(N + b * m, m), vjp, du, scale);
      for (std::size_t k = 0; k < m; ++k) dy[N + b * m + k] = -vjp[k];
      for (std::size_t i = 0; i < R; ++i) {
        const std::size_t off = (2 + i) * N + b * m;
        ev.backward(yy.subspan(off, m), vjp, {});
        for (std::size_t k = 0; k < m; ++k) dy[off + k] = -vjp[k];
      }
    }
  };

  res.report.state_dim = y.size();
  accumulate_grid_point(ev, grid.times.front(), y, batch, R, grid.dt, res.factors);
  for (std::size_t j = 1; j < grid.times.size(); ++j) {
    SolveReport seg = odesolve(y, grid.times[j - 1], grid.times[j], field, cfg);
    res.report.nfe += seg.nfe;
    res.report.accepted_steps += seg.accepted_steps;
    res.report.rejected_steps += seg.rejected_steps;
    res.report.working_buffers = std::max(res.report.working_buffers, seg.working_buffers);
    y = std::move(seg.terminal_state);
    accumulate_grid_point(ev, grid.times[j], y, batch, R, grid.dt, res.factors);
  }

  res.x0.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(N));
  res.a0.assign(y.begin() + static_cast<std::ptrdiff_t>(N), y.begin() + static_cast<std::ptrdiff_t>(2 * N));
  res.grad = ParamVec(spec, std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(o_u), y.end()));
  res.report.terminal_state = std::move(y);
  return res;
}

// Q_u <- gamma theta + Q_u; the gamma I shift on Q_uu is carried as damping
// and applied in the eigenbasis by the update.
inline void apply_weight_decay(ParamVec& grad, KroneckerFactors& factors, double gamma, const ParamVec& theta) {
  if (gamma < 0.0) throw ConfigError("apply_weight_decay: gamma must be >= 0");
  if (grad.size() != theta.size()) throw DimensionMismatch("apply_weight_decay: shapes");
  if (gamma == 0.0) return;
  grad.axpy(gamma, theta);
  factors.damping += gamma;
}

}  // namespace snopt
