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

#include <cmath>
#include <numbers>
#include <sstream>

#include "test_util.hpp"

using namespace snopt;

TEST(Spirals, SizesAndSplit) {
  const Dataset ds = make_spirals(250, 0.05, 1);
  EXPECT_EQ(ds.train.size(), 400u);
  EXPECT_EQ(ds.test.size(), 100u);
  EXPECT_EQ(ds.num_classes, 2u);
  std::size_t ones = 0;
  for (const auto& t : ds.test.targets) ones += std::get<Label>(t);
  EXPECT_EQ(ones, 50u);
}

TEST(Spirals, NoiselessPointsLieOnTheSpiral) {
  const Dataset ds = make_spirals(11, 0.0, 3);
  EXPECT_EQ(ds.train.inputs[0], (std::vector<double>{0.0, 0.0}));
  for (std::size_t k = 0; k < ds.train.size(); ++k) {
    const auto& x = ds.train.inputs[k];
    const double r = std::hypot(x[0], x[1]);
    EXPECT_LE(r, 1.0 + 1e-12);
    if (r < 1e-12) continue;
    // class 1 is class 0 rotated by pi: angle(x) - 4 pi r is a multiple of pi with parity = label
    const double phase = std::atan2(x[1], x[0]) - 4.0 * std::numbers::pi * r;
    const double turns = phase / std::numbers::pi;
    EXPECT_NEAR(turns, std::round(turns), 1e-9);
    EXPECT_EQ(static_cast<std::size_t>(std::abs(std::llround(turns))) % 2, std::get<Label>(ds.train.targets[k]));
  }
}

TEST(Spirals, DeterministicInSeed) {
  const Dataset a = make_spirals(20, 0.1, 9), b = make_spirals(20, 0.1, 9), c = make_spirals(20, 0.1, 10);
  EXPECT_EQ(a.train.inputs, b.train.inputs);
  EXPECT_NE(a.train.inputs, c.train.inputs);
}

TEST(Circles, RadiiAndClasses) {
  const Dataset ds = make_circles(10, {0.5, 1.0, 2.0}, 0.0, 2);
  EXPECT_EQ(ds.num_classes, 3u);
  for (std::size_t k = 0; k < ds.train.size(); ++k) {
    const double r = std::hypot(ds.train.inputs[k][0], ds.train.inputs[k][1]);
    const double expect[] = {0.5, 1.0, 2.0};
    EXPECT_NEAR(r, expect[std::get<Label>(ds.train.targets[k])], 1e-12);
  }
}

TEST(Regression, TargetsFollowTheMap) {
  const Dataset ds = make_regression(50, 4);
  EXPECT_EQ(ds.train.size() + ds.test.size(), 50u);
  EXPECT_FALSE(ds.is_classification());
  for (std::size_t k = 0; k < ds.test.size(); ++k) {
    const auto& x = ds.test.inputs[k];
    const auto& y = std::get<std::vector<double>>(ds.test.targets[k]);
    EXPECT_DOUBLE_EQ(y[0], x[0] + 0.3 * std::sin(std::numbers::pi * x[1]));
    EXPECT_LE(std::abs(x[0]), 1.0);
  }
}

TEST(Data, BadArguments) {
  EXPECT_THROW(make_spirals(0, 0.1, 1), ConfigError);
  EXPECT_THROW(make_spirals(5, -1.0, 1), ConfigError);
  EXPECT_THROW(make_circles(5, {1.0}, 0.1, 1), ConfigError);
  EXPECT_THROW(make_regression(0, 1), ConfigError);
}

TEST(Data, CsvExport) {
  std::ostringstream os;
  write_dataset_csv(make_spirals(5, 0.0, 1), os);
  std::istringstream is(os.str());
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  EXPECT_EQ(header, "split,x0,x1,label");
  EXPECT_EQ(first, "train,0,0,0");
  std::ostringstream rs;
  write_dataset_csv(make_regression(3, 1), rs);
  EXPECT_EQ(rs.str().substr(0, rs.str().find('\n')), "split,x0,x1,target0,target1");
}
