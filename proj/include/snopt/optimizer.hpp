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

// Parameter update rules: the eigen-amortized, Tikhonov-regularized Kronecker
// update used by SNOpt, and the SGD-momentum / Adam baselines.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/kfac.hpp"
#include "snopt/numerics.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

// Tuning grids for the learning rate of each method and for weight decay.
inline constexpr std::array<double, 11> kAdamLrGrid{1e-4, 3e-4, 5e-4, 7e-4, 1e-3, 3e-3,
                                                    5e-3, 7e-3, 1e-2, 3e-2, 5e-2};
inline constexpr std::array<double, 11> kSgdLrGrid{1e-3, 3e-3, 5e-3, 7e-3, 1e-2, 3e-2,
                                                   5e-2, 7e-2, 1e-1, 3e-1, 5e-1};
inline constexpr std::array<double, 11> kSnoptLrGrid = kSgdLrGrid;
inline constexpr std::array<double, 3> kWeightDecayGrid{0.0, 1e-4, 1e-3};
inline constexpr std::array<double, 3> kSnoptEpsGrid{0.1, 0.05, 0.03};
inline constexpr double kSnoptAlpha = 0.75;

struct SnoptLayerState {
  SymEigen eig_a;
  SymEigen eig_b;
  DenseMatrix s_star;  // out x (in + 1), amortized squared gradient in the eigenbasis
};

struct SnoptState {
  double lr = 0.1;
  double eps = 0.05;
  double alpha = kSnoptAlpha;
  std::vector<SnoptLayerState> layers;  // sized on first step, S* starts at 0

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("snopt: eps must be > 0");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("snopt: alpha must be in [0, 1)");
  }
};

namespace detail {

inline SymEigen checked_eigen(const DenseMatrix& m, const char* which) {
  try {
    return sym_eigen(m);
  } catch (const ConvergenceFailure& e) {
    throw SingularFactor(std::string("snopt_step: eigendecomposition of ") + which + " failed: " + e.what());
  }
}

}  // namespace detail

// Per layer n, with G = unvec(grad^n) (out x (in + 1)):
//   X  = U_B^T G U_A
//   S* = alpha S* + (1 - alpha) X.^2
//   X  = X ./ (S* + eps + damping)
//   theta^n -= lr * vec(U_B X U_A^T)
inline ParamVec snopt_step(SnoptState& state, const KroneckerFactors& factors, const ParamVec& grad,
                           const ParamVec& theta) {
  state.validate();
  if (!grad.same_layout(theta)) throw DimensionMismatch("snopt_step: grad/theta layout mismatch");
  if (factors.layers.size() != theta.num_layers()) throw DimensionMismatch("snopt_step: factor count != layers");
  const auto& segs = theta.segments();
  if (state.layers.size() != segs.size()) {
    state.layers.clear();
    for (const auto& s : segs) state.layers.push_back({{}, {}, DenseMatrix(s.out, s.in + 1)});
  }
  ParamVec out = theta;
  const double shift = state.eps + factors.damping;
  for (std::size_t l = 0; l < segs.size(); ++l) {
    const auto& s = segs[l];
    const auto& f = factors.layers[l];
    if (f.a.rows() != s.in + 1 || f.b.rows() != s.out) throw DimensionMismatch("snopt_step: factor shape");
    auto& ls = state.layers[l];
    ls.eig_a = detail::checked_eigen(f.a, "A");
    ls.eig_b = detail::checked_eigen(f.b, "B");
    const DenseMatrix& ua = ls.eig_a.eigenvectors;
    const DenseMatrix& ub = ls.eig_b.eigenvectors;
    const DenseMatrix g = grad.layer_matrix(l);
    DenseMatrix x = ub.transpose() * g * ua;
    auto sd = ls.s_star.data();
    auto xd = x.data();
    for (std::size_t k = 0; k < xd.size(); ++k) {
      sd[k] = state.alpha * sd[k] + (1.0 - state.alpha) * xd[k] * xd[k];
      xd[k] /= sd[k] + shift;
    }
    const DenseMatrix delta = ub * x * ua.transpose();
    auto dst = out.layer(l);
    const auto dd = delta.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= state.lr * dd[k];
  }
  return out;
}

struct SgdState {
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<double> buffer;
};

// buf = momentum * buf + g;  p -= lr * buf
inline void sgd_update(SgdState& st, std::span<const double> grad, std::span<double> params) {
  if (grad.size() != params.size()) throw DimensionMismatch("sgd: grad/params size");
  if (st.buffer.empty()) st.buffer.assign(params.size(), 0.0);
  if (st.buffer.size() != params.size()) throw DimensionMismatch("sgd: buffer size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.buffer[i] = st.momentum * st.buffer[i] + grad[i];
    params[i] -= st.lr * st.buffer[i];
  }
}

inline ParamVec sgd_step(SgdState& st, const ParamVec& grad, const ParamVec& theta) {
  ParamVec out = theta;
  sgd_update(st, grad.values(), out.values());
  return out;
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;
};

inline void adam_update(AdamState& st, std::span<const double> grad, std::span<double> params) {
  if (grad.size() != params.size()) throw DimensionMismatch("adam: grad/params size");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size()) throw DimensionMismatch("adam: moment size");
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    params[i] -= st.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
  }
}

inline ParamVec adam_step(AdamState& st, const ParamVec& grad, const ParamVec& theta) {
  ParamVec out = theta;
  adam_update(st, grad.values(), out.values());
  return out;
}

}  // namespace snopt
