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

// Helpers shared by the unit tests. Reference quantities are computed with
// Eigen or by hand, never by the library code under test.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "snopt/snopt.hpp"

namespace testutil {

inline Eigen::MatrixXd to_eigen(const snopt::DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) e(i, j) = m(i, j);
  return e;
}

inline snopt::DenseMatrix from_eigen(const Eigen::MatrixXd& e) {
  snopt::DenseMatrix m(e.rows(), e.cols());
  for (Eigen::Index j = 0; j < e.cols(); ++j)
    for (Eigen::Index i = 0; i < e.rows(); ++i) m(i, j) = e(i, j);
  return m;
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  snopt::SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

inline snopt::DenseMatrix random_spd(std::size_t n, std::uint64_t seed) {
  const auto v = randn(n * n, seed);
  Eigen::Map<const Eigen::MatrixXd> q(v.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd a = q * q.transpose() + static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
  return from_eigen(a);
}

inline double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double d = b.norm();
  return d > 0 ? (a - b).norm() / d : (a - b).norm();
}

inline double act(snopt::Activation a, double h) {
  switch (a) {
    case snopt::Activation::tanh: return std::tanh(h);
    case snopt::Activation::relu: return h > 0 ? h : 0.0;
    case snopt::Activation::softplus: return std::log1p(std::exp(h));
    case snopt::Activation::identity: return h;
  }
  return h;
}

// Independent forward pass built from the weight/bias accessors.
inline Eigen::VectorXd mlp_forward(const snopt::MlpSpec& spec, const snopt::ParamVec& theta, double t,
                                   const Eigen::VectorXd& x) {
  Eigen::VectorXd z = x;
  if (spec.time_input == snopt::TimeInput::concat) {
    z.conservativeResize(x.size() + 1);
    z(x.size()) = t;
  }
  for (std::size_t n = 0; n < spec.num_layers(); ++n) {
    const std::size_t out = spec.dims[n + 1], in = spec.dims[n];
    Eigen::VectorXd h(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = theta.bias(n, i);
      for (std::size_t j = 0; j < in; ++j) s += theta.weight(n, i, j) * z(j);
      h(i) = act(spec.activations[n], s);
    }
    z = h;
  }
  return z;
}

// Central-difference Jacobian of the field in x.
inline Eigen::MatrixXd fd_state_jacobian(const snopt::MlpSpec& spec, const snopt::ParamVec& theta, double t,
                                         const Eigen::VectorXd& x, double h = 1e-6) {
  const auto m = x.size();
  Eigen::MatrixXd J(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    J.col(k) = (mlp_forward(spec, theta, t, xp) - mlp_forward(spec, theta, t, xm)) / (2 * h);
  }
  return J;
}

inline snopt::SolverConfig rk4(double h) {
  snopt::SolverConfig c;
  c.method = snopt::Method::rk4;
  c.fixed_step = h;
  return c;
}

inline snopt::SolverConfig dopri5(double tol) {
  snopt::SolverConfig c;
  c.rtol = c.atol = tol;
  return c;
}

}  // namespace testutil

namespace testutil {

// Classical rk4 flow of the hand-rolled field, for finite-difference oracles.
inline Eigen::VectorXd flow(const snopt::MlpSpec& spec, const snopt::ParamVec& theta, Eigen::VectorXd x, double t0,
                            double t1, int steps) {
  const double h = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * h;
    const Eigen::VectorXd k1 = mlp_forward(spec, theta, t, x);
    const Eigen::VectorXd k2 = mlp_forward(spec, theta, t + h / 2, x + h / 2 * k1);
    const Eigen::VectorXd k3 = mlp_forward(spec, theta, t + h / 2, x + h / 2 * k2);
    const Eigen::VectorXd k4 = mlp_forward(spec, theta, t + h, x + h * k3);
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

// d x(t1) / d theta by central differences of the hand-rolled flow.
inline Eigen::MatrixXd flow_param_jacobian(const snopt::MlpSpec& spec, const snopt::ParamVec& theta,
                                           const Eigen::VectorXd& x0, double t0, double t1, int steps,
                                           double h = 1e-6) {
  Eigen::MatrixXd J(x0.size(), theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    snopt::ParamVec p = theta, m = theta;
    p[k] += h;
    m[k] -= h;
    J.col(k) = (flow(spec, p, x0, t0, t1, steps) - flow(spec, m, x0, t0, t1, steps)) / (2 * h);
  }
  return J;
}

}  // namespace testutil
