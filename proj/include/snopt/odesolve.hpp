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

// Initial-value solver over flat state vectors. Integrates forward or
// backward in time (t_end < t_start); only the terminal state and step
// accounting survive a solve, no per-step history is kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snopt/errors.hpp"

namespace snopt {

enum class Method { euler, rk4, dopri5 };
enum class ErrorNorm { full, semi };

struct SolverConfig {
  Method method = Method::dopri5;
  double rtol = 1e-3;
  double atol = 1e-3;
  std::optional<double> fixed_step;  // required for euler / rk4
  std::size_t max_steps = 100000;
  ErrorNorm error_norm = ErrorNorm::full;
  // Number of leading state components the semi-norm is computed over.
  // Set by the backward passes; 0 means "whole state".
  std::size_t semi_prefix = 0;
  std::optional<double> max_step;  // dopri5 only

  void validate() const {
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("solver: rtol and atol must be > 0");
    if (fixed_step && !(*fixed_step > 0.0)) throw ConfigError("solver: fixed_step must be > 0");
    if (method != Method::dopri5 && !fixed_step) throw ConfigError("solver: euler/rk4 require fixed_step");
    if (max_steps < 1) throw ConfigError("solver: max_steps must be >= 1");
    if (max_step && !(*max_step > 0.0)) throw ConfigError("solver: max_step must be > 0");
  }
};

struct SolveReport {
  std::vector<double> terminal_state;
  std::size_t nfe = 0;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  // Instrumentation for memory accounting: length of the integrated state
  // and the number of state-sized buffers the stepper keeps alive.
  std::size_t state_dim = 0;
  std::size_t working_buffers = 0;
};

inline std::size_t nfe_of(const SolveReport& report) noexcept { return report.nfe; }

inline const char* to_string(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
  }
  return "?";
}

namespace detail {

inline void check_finite(std::span<const double> y, double t) {
  for (double v : y)
    if (!std::isfinite(v)) throw NonFiniteState("odesolve: non-finite state at t=" + std::to_string(t));
}

// Dormand-Prince 5(4) tableau.
struct Dopri5Tableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  // 5th-order minus embedded 4th-order weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline constexpr double kSafety = 0.9;
inline constexpr double kMinFactor = 0.2;
inline constexpr double kMaxFactor = 10.0;
inline constexpr double kPiBeta = 0.04;
inline constexpr double kPiAlpha = 0.2 - kPiBeta * 0.75;

template <class Field>
SolveReport solve_fixed(std::span<const double> y0, double t0, double t1, Field& field, const SolverConfig& cfg) {
  const std::size_t n = y0.size();
  const double span_len = std::abs(t1 - t0);
  auto steps = static_cast<std::size_t>(std::ceil(span_len / *cfg.fixed_step - 1e-9));
  steps = std::max<std::size_t>(steps, 1);
  if (steps > cfg.max_steps) throw MaxStepsExceeded("odesolve: fixed-step run needs more than max_steps steps");
  const double h = (t1 - t0) / static_cast<double>(steps);

  SolveReport rep;
  rep.state_dim = n;
  std::vector<double> y(y0.begin(), y0.end());
  if (cfg.method == Method::euler) {
    std::vector<double> k(n);
    rep.working_buffers = 2;
    for (std::size_t s = 0; s < steps; ++s) {
      const double t = t0 + static_cast<double>(s) * h;
      field(t, std::span<const double>(y), std::span<double>(k));
      ++rep.nfe;
      for (std::size_t i = 0; i < n; ++i) y[i] += h * k[i];
      ++rep.accepted_steps;
      check_finite(y, t + h);
    }
  } else {
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    rep.working_buffers = 6;
    for (std::size_t s = 0; s < steps; ++s) {
      const double t = t0 + static_cast<double>(s) * h;
      field(t, std::span<const double>(y), std::span<double>(k1));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      field(t + 0.5 * h, std::span<const double>(tmp), std::span<double>(k2));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      field(t + 0.5 * h, std::span<const double>(tmp), std::span<double>(k3));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
      field(t + h, std::span<const double>(tmp), std::span<double>(k4));
      rep.nfe += 4;
      for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      ++rep.accepted_steps;
      check_finite(y, t + h);
    }
  }
  rep.terminal_state = std::move(y);
  return rep;
}

template <class Field>
SolveReport solve_dopri5(std::span<const double> y0, double t0, double t1, Field& field, const SolverConfig& cfg) {
  using T = Dopri5Tableau;
  const std::size_t n = y0.size();
  const std::size_t norm_len =
      (cfg.error_norm == ErrorNorm::semi && cfg.semi_prefix > 0 && cfg.semi_prefix <= n) ? cfg.semi_prefix : n;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  const double span_len = std::abs(t1 - t0);

  SolveReport rep;
  rep.state_dim = n;
  rep.working_buffers = 10;  // y, y_new, tmp, k1..k7
  std::vector<double> y(y0.begin(), y0.end()), y_new(n), tmp(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);

  double t = t0;
  field(t, std::span<const double>(y), std::span<double>(k1));
  rep.nfe = 1;
  check_finite(k1, t);

  // Initial step from the field magnitude at t0 (no extra evaluation), capped
  // at a hundredth of the interval.
  double h_abs;
  {
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < norm_len; ++i) {
      const double sc = cfg.atol + cfg.rtol * std::abs(y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(std::max<std::size_t>(norm_len, 1)));
    d1 = std::sqrt(d1 / static_cast<double>(std::max<std::size_t>(norm_len, 1)));
    h_abs = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h_abs = std::min(h_abs, span_len / 100.0);
    if (cfg.max_step) h_abs = std::min(h_abs, *cfg.max_step);
  }

  double err_old = 1e-4;
  bool last_rejected = false;
  while (dir * (t1 - t) > 0.0) {
    if (rep.accepted_steps + rep.rejected_steps >= cfg.max_steps)
      throw MaxStepsExceeded("odesolve: exceeded max_steps=" + std::to_string(cfg.max_steps));
    if (cfg.max_step) h_abs = std::min(h_abs, *cfg.max_step);
    bool final_step = false;
    if (h_abs >= std::abs(t1 - t) * (1.0 - 1e-12)) {
      h_abs = std::abs(t1 - t);
      final_step = true;
    }
    if (h_abs <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
      throw MaxStepsExceeded("odesolve: step size underflow at t=" + std::to_string(t));
    const double h = dir * h_abs;

    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * T::a21 * k1[i];
    field(t + T::c2 * h, std::span<const double>(tmp), std::span<double>(k2));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
    field(t + T::c3 * h, std::span<const double>(tmp), std::span<double>(k3));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
    field(t + T::c4 * h, std::span<const double>(tmp), std::span<double>(k4));
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
    field(t + T::c5 * h, std::span<const double>(tmp), std::span<double>(k5));
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] + T::a65 * k5[i]);
    field(t + h, std::span<const double>(tmp), std::span<double>(k6));
    for (std::size_t i = 0; i < n; ++i)
      y_new[i] = y[i] + h * (T::a71 * k1[i] + T::a73 * k3[i] + T::a74 * k4[i] + T::a75 * k5[i] + T::a76 * k6[i]);
    const double t_new = final_step ? t1 : t + h;
    field(t_new, std::span<const double>(y_new), std::span<double>(k7));
    rep.nfe += 6;

    double err = 0.0;
    for (std::size_t i = 0; i < norm_len; ++i) {
      const double e =
          h * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] + T::e6 * k6[i] + T::e7 * k7[i]);
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / static_cast<double>(std::max<std::size_t>(norm_len, 1)));
    if (!std::isfinite(err)) throw NonFiniteState("odesolve: non-finite error estimate at t=" + std::to_string(t));

    if (err <= 1.0) {
      ++rep.accepted_steps;
      check_finite(y_new, t_new);
      t = t_new;
      y.swap(y_new);
      k1.swap(k7);  // FSAL
      double fac = kSafety * std::pow(std::max(err, 1e-10), -kPiAlpha) * std::pow(err_old, kPiBeta);
      fac = std::clamp(fac, kMinFactor, kMaxFactor);
      if (last_rejected) fac = std::min(fac, 1.0);
      h_abs *= fac;
      err_old = std::max(err, 1e-4);
      last_rejected = false;
    } else {
      ++rep.rejected_steps;
      h_abs *= std::max(kMinFactor, kSafety * std::pow(err, -kPiAlpha));
      last_rejected = true;
    }
  }
  rep.terminal_state = std::move(y);
  return rep;
}

}  // namespace detail

// field(t, y, dy) writes dy/dt into dy. Deterministic for a deterministic field.
template <class Field>
SolveReport odesolve(std::span<const double> y0, double t_start, double t_end, Field&& field, const SolverConfig& cfg) {
  cfg.validate();
  detail::check_finite(y0, t_start);
  if (t_start == t_end) {
    SolveReport rep;
    rep.terminal_state.assign(y0.begin(), y0.end());
    rep.state_dim = y0.size();
    return rep;
  }
  if (cfg.method == Method::dopri5) return detail::solve_dopri5(y0, t_start, t_end, field, cfg);
  return detail::solve_fixed(y0, t_start, t_end, field, cfg);
}

}  // namespace snopt
