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

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace snopt;
using testutil::to_eigen;

TEST(FdGradient, QuadraticIsExact) {
  auto f = [](std::span<const double> x) { return 3 * x[0] * x[0] + x[0] * x[1] - 2 * x[1]; };
  const std::vector<double> x{0.5, -1.0};
  const auto g = fd_gradient(f, std::span<const double>(x), 1e-4);
  EXPECT_NEAR(g[0], 3.0 - 1.0, 1e-9);
  EXPECT_NEAR(g[1], 0.5 - 2.0, 1e-9);
}

TEST(FdFlowJacobian, MatchesHandRolledFlow) {
  const MlpSpec spec = MlpSpec::make(2, {3}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, 3);
  const std::vector<double> x0{0.2, -0.4};
  const DenseMatrix J = fd_flow_jacobian(spec, theta, x0, 0.0, 1.0, testutil::rk4(0.01), 1e-6);
  const Eigen::MatrixXd ref = testutil::flow_param_jacobian(spec, theta, to_eigen(x0), 0.0, 1.0, 100);
  EXPECT_LT(testutil::rel(to_eigen(J), ref), 1e-8);
}

TEST(GaussNewtonReference, MatchesSandwich) {
  // two samples, m = 2, n = 3
  const Eigen::MatrixXd J = Eigen::MatrixXd::Random(4, 3);
  TerminalCurvature a, b;
  a.grad = b.grad = {0, 0};
  a.factors = {{1.0, 2.0}};
  b.factors = {{-0.5, 0.3}};
  const std::vector<TerminalCurvature> curv{a, b};
  const DenseMatrix got = gauss_newton_reference(testutil::from_eigen(J), curv);
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, -0.5, 0.3;
  const Eigen::MatrixXd ref = J.transpose() * y * y.transpose() * J / 4.0;
  EXPECT_LT(testutil::rel(to_eigen(got), ref), 1e-14);
}

TEST(ErrorStudy, RowsAndTrends) {
  const MlpSpec spec = MlpSpec::make(2, {4}, Activation::tanh);
  const ParamVec theta = ParamVec::glorot(spec, 2);
  const std::vector<double> x0{0.3, -0.2, -0.5, 0.6};
  const LossProblem loss{LossKind::softmax_ce, nullptr, {Label{0}, Label{1}}};
  const std::vector<SolverSetting> solvers{dopri5_setting(1e-3), dopri5_setting(1e-6)};
  const auto rows = error_study(spec, theta, x0, loss, solvers);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, "dopri5 tol=0.001");
  EXPECT_GT(rows[0].grad_error, rows[1].grad_error);
  EXPECT_GT(rows[0].curv_error, rows[1].curv_error);
  EXPECT_LT(rows[0].nfe_fwd, rows[1].nfe_fwd);
  std::ostringstream os;
  write_error_study_csv(rows, os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "solver,method,tolerance,grad_rel_error,curv_rel_error,nfe_fwd,nfe_bwd");
}
