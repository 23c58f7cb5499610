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

// Second-order backward sweeps.
//
// dense_sweep integrates the full matrix system for Q_x, Q_u, Q_xx, Q_xu,
// Q_ux, Q_uu jointly with x from t1 down to t0. It is the reference path and
// only practical for tiny nets.
//
// lowrank_sweep carries R vector pairs (q_i, p_i) instead, with
//   -dq_i/dt = F_x^T q_i,   -dp_i/dt = F_u^T q_i,   (q_i, p_i)(t1) = (y_i, 0)
// so that Q_xx = sum q_i q_i^T, Q_xu = sum q_i p_i^T, Q_uu = sum p_i p_i^T.
//
// Batches: x, Q_x and q_i are sample-major (B x m); every u-row is
// mean-reduced over the batch (the factor s = 1/B below), matching the
// gradient. The terminal Q_xx is taken from the stacked factors, so both
// sweeps see the same rank-R terminal matrix.
//
// The running cost is identically zero inside the integral; weight decay is
// applied afterwards with apply_weight_decay.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "snopt/adjoint.hpp"
#include "snopt/errors.hpp"
#include "snopt/loss.hpp"
#include "snopt/numerics.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

namespace detail {

inline std::size_t common_rank(std::span<const TerminalCurvature> curv, std::size_t m) {
  if (curv.empty()) throw DimensionMismatch("curvature: no terminal curvature supplied");
  const std::size_t r = curv.front().rank();
  for (const auto& c : curv) {
    if (c.rank() != r) throw DimensionMismatch("curvature: all samples must share the factor rank");
    if (c.grad.size() != m) throw DimensionMismatch("curvature: |grad| != state dim");
    for (const auto& y : c.factors)
      if (y.size() != m) throw DimensionMismatch("curvature: |y_i| != state dim");
  }
  return r;
}

inline std::size_t packed_index(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

inline std::size_t packed_size(std::size_t n) { return n * (n + 1) / 2; }

inline DenseMatrix unpack_symmetric(std::span<const double> packed, std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i <= j; ++i) m(i, j) = m(j, i) = packed[packed_index(i, j)];
  return m;
}

inline void pack_upper(const DenseMatrix& m, std::span<double> packed) {
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i <= j; ++i) packed[packed_index(i, j)] = m(i, j);
}

}  // namespace detail

struct DenseCurvatureState {
  std::vector<double> x;    // reconstructed x(t0)
  std::vector<double> q_x;  // N
  std::vector<double> q_u;  // n
  DenseMatrix q_xx;         // N x N
  DenseMatrix q_xu;         // N x n
  DenseMatrix q_ux;         // n x N
  DenseMatrix q_uu;         // n x n
  SolveReport report;
};

inline DenseCurvatureState dense_sweep(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x1,
                                       std::span<const TerminalCurvature> curv, double t0, double t1,
                                       SolverConfig cfg) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = detail::batch_size_of(spec, x1, "dense_sweep");
  if (curv.size() != batch) throw DimensionMismatch("dense_sweep: one terminal curvature per sample required");
  const std::size_t R = detail::common_rank(curv, m);
  const std::size_t N = batch * m;
  const std::size_t n = theta.size();
  const double s = 1.0 / static_cast<double>(batch);

  // Layout: x | Q_x | Q_u | Q_xx (packed upper) | Q_xu | Q_ux | Q_uu (packed upper)
  const std::size_t o_qx = N, o_qu = 2 * N, o_xx = o_qu + n;
  const std::size_t o_xu = o_xx + detail::packed_size(N);
  const std::size_t o_ux = o_xu + N * n;
  const std::size_t o_uu = o_ux + n * N;
  const std::size_t total = o_uu + detail::packed_size(n);

  std::vector<double> y1(total, 0.0);
  std::copy(x1.begin(), x1.end(), y1.begin());
  DenseMatrix qxx1(N, N);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(curv[b].grad.begin(), curv[b].grad.end(), y1.begin() + static_cast<std::ptrdiff_t>(o_qx + b * m));
  }
  for (std::size_t i = 0; i < R; ++i) {
    std::vector<double> y(N);
    for (std::size_t b = 0; b < batch; ++b) std::copy(curv[b].factors[i].begin(), curv[b].factors[i].end(), y.begin() + static_cast<std::ptrdiff_t>(b * m));
    qxx1.add_outer(y, y);
  }
  detail::pack_upper(qxx1, std::span<double>(y1).subspan(o_xx, detail::packed_size(N)));

  // Cotangents per evaluation: Q_x, the N columns of Q_xx, the n columns of
  // Q_xu and the n columns of Q_ux^T. Each reverse pass yields F_x^T v and
  // F_u^T v together.
  const std::size_t n_cot = 1 + N + 2 * n;
  DenseMatrix cot(N, n_cot), fx(N, n_cot), fu(n, n_cot);
  std::vector<double> fwd(m);

  MlpEvaluator ev(spec, theta);
  auto field = [&](double t, std::span<const double> y, std::span<double> dy) {
    const DenseMatrix qxx = detail::unpack_symmetric(y.subspan(o_xx, detail::packed_size(N)), N);
    const DenseMatrix qxu = DenseMatrix::unvec(y.subspan(o_xu, N * n), N, n);
    const DenseMatrix qux = DenseMatrix::unvec(y.subspan(o_ux, n * N), n, N);
    std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(o_qx), N, cot.col(0).begin());
    for (std::size_t j = 0; j < N; ++j) std::copy_n(qxx.col(j).begin(), N, cot.col(1 + j).begin());
    for (std::size_t j = 0; j < n; ++j) std::copy_n(qxu.col(j).begin(), N, cot.col(1 + N + j).begin());
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < N; ++i) cot(i, 1 + N + n + j) = qux(j, i);

    std::fill(fu.data().begin(), fu.data().end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      ev.forward(t, y.subspan(b * m, m), dy.subspan(b * m, m));
      for (std::size_t c = 0; c < n_cot; ++c)
        ev.backward(cot.col(c).subspan(b * m, m), fx.col(c).subspan(b * m, m), fu.col(c), 1.0);
    }

    for (std::size_t i = 0; i < N; ++i) dy[o_qx + i] = -fx(i, 0);
    for (std::size_t k = 0; k < n; ++k) dy[o_qu + k] = -s * fu(k, 0);

    // -dQ_xx/dt = F_x^T Q_xx + Q_xx F_x
    DenseMatrix dxx(N, N);
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < N; ++i) dxx(i, j) = -(fx(i, 1 + j) + fx(j, 1 + i));
    detail::pack_upper(dxx, dy.subspan(o_xx, detail::packed_size(N)));

    // -dQ_xu/dt = s Q_xx F_u + F_x^T Q_xu ;  -dQ_ux/dt = s F_u^T Q_xx + Q_ux F_x
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < N; ++i) {
        dy[o_xu + j * N + i] = -(s * fu(j, 1 + i) + fx(i, 1 + N + j));
        dy[o_ux + i * n + j] = -(s * fu(j, 1 + i) + fx(i, 1 + N + n + j));
      }

    // -dQ_uu/dt = s (F_u^T Q_xu + Q_ux F_u)
    DenseMatrix duu(n, n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) duu(i, j) = -s * (fu(i, 1 + N + j) + fu(j, 1 + N + n + i));
    detail::pack_upper(duu, dy.subspan(o_uu, detail::packed_size(n)));
  };

  cfg.error_norm = ErrorNorm::full;
  SolveReport rep = odesolve(y1, t1, t0, field, cfg);
  const auto& y0 = rep.terminal_state;
  DenseCurvatureState st;
  st.x.assign(y0.begin(), y0.begin() + static_cast<std::ptrdiff_t>(N));
  st.q_x.assign(y0.begin() + static_cast<std::ptrdiff_t>(o_qx), y0.begin() + static_cast<std::ptrdiff_t>(o_qx + N));
  st.q_u.assign(y0.begin() + static_cast<std::ptrdiff_t>(o_qu), y0.begin() + static_cast<std::ptrdiff_t>(o_qu + n));
  const std::span<const double> yv(y0);
  st.q_xx = detail::unpack_symmetric(yv.subspan(o_xx, detail::packed_size(N)), N);
  st.q_xu = DenseMatrix::unvec(yv.subspan(o_xu, N * n), N, n);
  st.q_ux = DenseMatrix::unvec(yv.subspan(o_ux, n * N), n, N);
  st.q_uu = detail::unpack_symmetric(yv.subspan(o_uu, detail::packed_size(n)), n);
  st.report = std::move(rep);
  return st;
}

struct LowRankCurvatureState {
  std::vector<double> x;                // B x m
  std::vector<double> q_x;              // B x m
  std::vector<double> q_u;              // n
  std::vector<std::vector<double>> q;   // R x (B x m)
  std::vector<std::vector<double>> p;   // R x n
  SolveReport report;

  std::size_t rank() const noexcept { return q.size(); }

  // Layout: x | Q_x | q_1..q_R | Q_u | p_1..p_R. The first (2 + R) N entries
  // are the components that feed back into the dynamics.
  std::vector<double> flatten() const {
    std::vector<double> v;
    auto put = [&](const std::vector<double>& a) { v.insert(v.end(), a.begin(), a.end()); };
    put(x);
    put(q_x);
    for (const auto& qi : q) put(qi);
    put(q_u);
    for (const auto& pi : p) put(pi);
    return v;
  }

  static LowRankCurvatureState unflatten(std::span<const double> v, std::size_t N, std::size_t n, std::size_t R) {
    if (v.size() != N * (2 + R) + n * (1 + R)) throw DimensionMismatch("LowRankCurvatureState: length");
    LowRankCurvatureState s;
    std::size_t off = 0;
    auto take = [&](std::size_t len) {
      std::vector<double> a(v.begin() + static_cast<std::ptrdiff_t>(off),
                            v.begin() + static_cast<std::ptrdiff_t>(off + len));
      off += len;
      return a;
    };
    s.x = take(N);
    s.q_x = take(N);
    for (std::size_t i = 0; i < R; ++i) s.q.push_back(take(N));
    s.q_u = take(n);
    for (std::size_t i = 0; i < R; ++i) s.p.push_back(take(n));
    return s;
  }

  DenseMatrix q_xx() const {
    DenseMatrix r(x.size(), x.size());
    for (const auto& qi : q) r.add_outer(qi, qi);
    return r;
  }
  DenseMatrix q_xu() const {
    DenseMatrix r(x.size(), q_u.size());
    for (std::size_t i = 0; i < q.size(); ++i) r.add_outer(q[i], p[i]);
    return r;
  }
};

inline LowRankCurvatureState lowrank_sweep(const MlpSpec& spec, const ParamVec& theta, std::span<const double> x1,
                                           std::span<const TerminalCurvature> curv, double t0, double t1,
                                           SolverConfig cfg, bool semi_norm = true) {
  const std::size_t m = spec.state_dim();
  const std::size_t batch = detail::batch_size_of(spec, x1, "lowrank_sweep");
  if (curv.size() != batch) throw DimensionMismatch("lowrank_sweep: one terminal curvature per sample required");
  const std::size_t R = detail::common_rank(curv, m);
  if (R == 0) throw DimensionMismatch("lowrank_sweep: rank must be >= 1");
  const std::size_t N = batch * m;
  const std::size_t n = theta.size();
  const double scale = -1.0 / static_cast<double>(batch);

  LowRankCurvatureState init;
  init.x.assign(x1.begin(), x1.end());
  init.q_x.resize(N);
  init.q.assign(R, std::vector<double>(N));
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(curv[b].grad.begin(), curv[b].grad.end(), init.q_x.begin() + static_cast<std::ptrdiff_t>(b * m));
    for (std::size_t i = 0; i < R; ++i)
      std::copy(curv[b].factors[i].begin(), curv[b].factors[i].end(),
                init.q[i].begin() + static_cast<std::ptrdiff_t>(b * m));
  }
  init.q_u.assign(n, 0.0);
  init.p.assign(R, std::vector<double>(n, 0.0));
  const std::vector<double> y1 = init.flatten();

  if (semi_norm) {
    cfg.error_norm = ErrorNorm::semi;
    cfg.semi_prefix = (2 + R) * N;
  }
  const std::size_t o_u = (2 + R) * N;

  MlpEvaluator ev(spec, theta);
  std::vector<double> vjp(m);
  auto field = [&](double t, std::span<const double> y, std::span<double> dy) {
    auto du = dy.subspan(o_u, n * (1 + R));
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      ev.forward(t, y.subspan(b * m, m), dy.subspan(b * m, m));
      for (std::size_t c = 0; c <= R; ++c) {  // c = 0 is Q_x, c = i + 1 is q_i
        const std::size_t off = (1 + c) * N + b * m;
        ev.backward(y.subspan(off, m), vjp, dy.subspan(o_u + c * n, n), scale);
        for (std::size_t k = 0; k < m; ++k) dy[off + k] = -vjp[k];
      }
    }
  };

  SolveReport rep = odesolve(y1, t1, t0, field, cfg);
  LowRankCurvatureState st = LowRankCurvatureState::unflatten(rep.terminal_state, N, n, R);
  st.report = std::move(rep);
  return st;
}

// Q_uu(t0) = sum_i p_i p_i^T
inline DenseMatrix assemble_quu(const LowRankCurvatureState& state) {
  const std::size_t n = state.q_u.size();
  DenseMatrix r(n, n);
  for (const auto& pi : state.p) r.add_outer(pi, pi);
  return r;
}

// Q_u <- gamma theta + Q_u,  Q_uu <- gamma I + Q_uu
inline void apply_weight_decay(ParamVec& grad, DenseMatrix& quu, double gamma, const ParamVec& theta) {
  if (gamma < 0.0) throw ConfigError("apply_weight_decay: gamma must be >= 0");
  if (grad.size() != theta.size() || quu.rows() != theta.size() || !quu.is_square())
    throw DimensionMismatch("apply_weight_decay: shapes");
  if (gamma == 0.0) return;
  grad.axpy(gamma, theta);
  for (std::size_t i = 0; i < quu.rows(); ++i) quu(i, i) += gamma;
}

}  // namespace snopt
