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

// Terminal objectives Phi(x(t1)) with first and second derivatives.
// mse uses 1/2 ||r||^2 so its Hessian is the identity; softmax_ce maps x(t1)
// through an optional affine readout to logits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/numerics.hpp"
#include "snopt/rng.hpp"

namespace snopt {

enum class LossKind { mse, softmax_ce };
enum class CurvatureMode { exact_rank, gauss_newton_scaled };

// logits = weight * x + bias
struct Readout {
  DenseMatrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != in_dim()) throw DimensionMismatch("Readout: |x| != input dim");
    std::vector<double> y = weight * x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i];
    return y;
  }

  static Readout glorot(std::size_t in, std::size_t out, std::uint64_t seed) {
    Readout r{DenseMatrix(out, in), std::vector<double>(out, 0.0)};
    SplitMix64 rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : r.weight.data()) w = rng.uniform(-bound, bound);
    return r;
  }

  std::size_t num_params() const noexcept { return weight.size() + bias.size(); }
};

using Label = std::size_t;
using Target = std::variant<Label, std::vector<double>>;

struct TerminalLoss {
  LossKind kind = LossKind::mse;
  Target target;
  const Readout* readout = nullptr;  // optional, not owned
};

struct TerminalCurvature {
  std::vector<double> grad;                   // Phi_x
  std::vector<std::vector<double>> factors;   // Phi_xx ~= sum_i y_i y_i^T
  CurvatureMode mode = CurvatureMode::exact_rank;

  std::size_t rank() const noexcept { return factors.size(); }

  DenseMatrix reconstruct() const {
    DenseMatrix h(grad.size(), grad.size());
    for (const auto& y : factors) h.add_outer(y, y);
    return h;
  }
};

struct ReadoutGrad {
  DenseMatrix weight;
  std::vector<double> bias;
};

namespace detail {

inline std::vector<double> head_output(const TerminalLoss& L, std::span<const double> x1) {
  return L.readout ? L.readout->apply(x1) : std::vector<double>(x1.begin(), x1.end());
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += (p[k] = std::exp(logits[k] - mx));
  for (double& v : p) v /= s;
  return p;
}

inline Label checked_label(const TerminalLoss& L, std::size_t classes) {
  const auto* label = std::get_if<Label>(&L.target);
  if (!label) throw BadLabel("softmax_ce: target must be a class index");
  if (*label >= classes)
    throw BadLabel("softmax_ce: class index " + std::to_string(*label) + " out of range for " +
                   std::to_string(classes) + " classes");
  return *label;
}

inline const std::vector<double>& checked_vector_target(const TerminalLoss& L, std::size_t dim) {
  const auto* t = std::get_if<std::vector<double>>(&L.target);
  if (!t) throw BadLabel("mse: target must be a vector");
  if (t->size() != dim) throw DimensionMismatch("mse: target dimension does not match output");
  return *t;
}

// d Phi / d(head output)
inline std::vector<double> head_gradient(const TerminalLoss& L, std::span<const double> out) {
  std::vector<double> d(out.size());
  if (L.kind == LossKind::mse) {
    const auto& tau = checked_vector_target(L, out.size());
    for (std::size_t i = 0; i < out.size(); ++i) d[i] = out[i] - tau[i];
  } else {
    const Label y = checked_label(L, out.size());
    d = softmax(out);
    d[y] -= 1.0;
  }
  return d;
}

// Pull a head-space vector back to state space: V^T v (identity without readout).
inline std::vector<double> pull_back(const TerminalLoss& L, std::span<const double> v) {
  if (!L.readout) return {v.begin(), v.end()};
  const DenseMatrix& w = L.readout->weight;
  std::vector<double> r(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) r[j] = dot(w.col(j), v);
  return r;
}

}  // namespace detail

inline double loss_value(const TerminalLoss& L, std::span<const double> x1) {
  const auto out = detail::head_output(L, x1);
  if (L.kind == LossKind::mse) {
    const auto& tau = detail::checked_vector_target(L, out.size());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += (out[i] - tau[i]) * (out[i] - tau[i]);
    return 0.5 * s;
  }
  const Label y = detail::checked_label(L, out.size());
  const double mx = *std::max_element(out.begin(), out.end());
  double s = 0.0;
  for (double v : out) s += std::exp(v - mx);
  return mx + std::log(s) - out[y];
}

inline std::vector<double> loss_gradient(const TerminalLoss& L, std::span<const double> x1) {
  const auto out = detail::head_output(L, x1);
  return detail::pull_back(L, detail::head_gradient(L, out));
}

inline bool is_correct(const TerminalLoss& L, std::span<const double> x1) {
  if (L.kind != LossKind::softmax_ce) return false;
  const auto out = detail::head_output(L, x1);
  const Label y = detail::checked_label(L, out.size());
  return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin()) == y;
}

// Gradient of Phi w.r.t. the readout parameters. Requires a readout.
inline ReadoutGrad readout_gradient(const TerminalLoss& L, std::span<const double> x1) {
  if (!L.readout) throw ConfigError("readout_gradient: loss has no readout");
  const auto out = L.readout->apply(x1);
  const auto d = detail::head_gradient(L, out);
  ReadoutGrad g{DenseMatrix::outer(d, x1), d};
  return g;
}

inline TerminalCurvature terminal_curvature(const TerminalLoss& L, std::span<const double> x1, double t0, double t1,
                                            CurvatureMode mode) {
  if (!(t1 > t0)) throw BadInterval("terminal_curvature: requires t1 > t0");
  TerminalCurvature c;
  c.mode = mode;
  const auto out = detail::head_output(L, x1);
  const auto dout = detail::head_gradient(L, out);
  c.grad = detail::pull_back(L, dout);

  if (mode == CurvatureMode::gauss_newton_scaled) {
    const double s = 1.0 / std::sqrt(t1 - t0);
    std::vector<double> y = c.grad;
    for (double& v : y) v *= s;
    c.factors.push_back(std::move(y));
    return c;
  }

  const std::size_t k_out = out.size();
  if (L.kind == LossKind::mse) {
    // Hessian in head space is I, so Phi_xx = V^T V = sum_k v_k v_k^T over readout rows.
    for (std::size_t k = 0; k < k_out; ++k) {
      std::vector<double> e(k_out, 0.0);
      e[k] = 1.0;
      c.factors.push_back(detail::pull_back(L, e));
    }
    return c;
  }
  // diag(p) - p p^T = sum_k p_k (e_k - p)(e_k - p)^T
  const auto p = detail::softmax(out);
  for (std::size_t k = 0; k < k_out; ++k) {
    std::vector<double> v(k_out);
    const double w = std::sqrt(p[k]);
    for (std::size_t j = 0; j < k_out; ++j) v[j] = w * ((j == k ? 1.0 : 0.0) - p[j]);
    c.factors.push_back(detail::pull_back(L, v));
  }
  return c;
}

// Batch of terminal states (sample-major B x m) against per-sample targets.
struct BatchLoss {
  double loss = 0.0;      // mean over the batch
  double accuracy = 0.0;  // fraction correct (softmax_ce only)
  std::vector<double> grads;  // per-sample Phi_x, unscaled, B x m
  ReadoutGrad readout_grad;   // mean over the batch (when a readout exists)
};

inline BatchLoss evaluate_batch(LossKind kind, const Readout* readout, std::span<const Target> targets,
                                std::span<const double> x1, std::size_t state_dim, bool with_grads) {
  const std::size_t batch = targets.size();
  if (x1.size() != batch * state_dim) throw DimensionMismatch("evaluate_batch: |x1| != B * m");
  BatchLoss r;
  if (with_grads) {
    r.grads.assign(x1.size(), 0.0);
    if (readout) r.readout_grad = {DenseMatrix(readout->out_dim(), readout->in_dim()),
                                   std::vector<double>(readout->out_dim(), 0.0)};
  }
  std::size_t correct = 0;
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batch, 1));
  for (std::size_t b = 0; b < batch; ++b) {
    const TerminalLoss L{kind, targets[b], readout};
    const auto xb = x1.subspan(b * state_dim, state_dim);
    r.loss += loss_value(L, xb) * inv;
    if (kind == LossKind::softmax_ce && is_correct(L, xb)) ++correct;
    if (with_grads) {
      const auto g = loss_gradient(L, xb);
      std::copy(g.begin(), g.end(), r.grads.begin() + static_cast<std::ptrdiff_t>(b * state_dim));
      if (readout) {
        const auto rg = readout_gradient(L, xb);
        r.readout_grad.weight += rg.weight * inv;
        for (std::size_t k = 0; k < rg.bias.size(); ++k) r.readout_grad.bias[k] += rg.bias[k] * inv;
      }
    }
  }
  r.accuracy = static_cast<double>(correct) * inv;
  return r;
}

}  // namespace snopt
