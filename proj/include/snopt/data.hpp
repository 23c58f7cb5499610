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

// Deterministic synthetic datasets. Every random draw comes from SplitMix64,
// so regenerating with the same seed is bit-identical across platforms.
// Every fifth point of each class goes to the test split; train points are
// ordered class-interleaved.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/loss.hpp"
#include "snopt/rng.hpp"

namespace snopt {

struct Split {
  std::vector<std::vector<double>> inputs;
  std::vector<Target> targets;  // class index or target vector

  std::size_t size() const noexcept { return inputs.size(); }
};

struct Dataset {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;  // 0 for regression
  std::uint64_t seed = 0;
  Split train;
  Split test;

  bool is_classification() const noexcept { return num_classes > 0; }
};

inline constexpr std::size_t kTestEvery = 5;

namespace detail {

inline bool is_test_index(std::size_t k) { return k % kTestEvery == kTestEvery / 2; }

// points[c][k] -> interleaved train / test splits
inline void split_classes(const std::vector<std::vector<std::vector<double>>>& points, Dataset& ds) {
  const std::size_t per_class = points.empty() ? 0 : points.front().size();
  for (std::size_t k = 0; k < per_class; ++k)
    for (std::size_t c = 0; c < points.size(); ++c) {
      Split& s = is_test_index(k) ? ds.test : ds.train;
      s.inputs.push_back(points[c][k]);
      s.targets.emplace_back(Label{c});
    }
}

}  // namespace detail

// Two interleaved spirals r = phi / (4 pi), phi in [0, 4 pi], class 1 rotated
// by pi, plus isotropic Gaussian noise.
inline Dataset make_spirals(std::size_t n_per_class, double noise_sd, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("make_spirals: n_per_class must be >= 1");
  if (noise_sd < 0.0) throw ConfigError("make_spirals: noise_sd must be >= 0");
  Dataset ds{"spirals", 2, 2, seed, {}, {}};
  SplitMix64 rng(seed);
  std::vector<std::vector<std::vector<double>>> pts(2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < n_per_class; ++k) {
      const double phi =
          n_per_class == 1 ? 0.0 : 4.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_per_class - 1);
      const double r = phi / (4.0 * std::numbers::pi);
      const double ang = phi + std::numbers::pi * static_cast<double>(c);
      const double nx = rng.normal(), ny = rng.normal();
      pts[c].push_back({r * std::cos(ang) + noise_sd * nx, r * std::sin(ang) + noise_sd * ny});
    }
  detail::split_classes(pts, ds);
  return ds;
}

// Concentric circles, one class per radius, angles evenly spaced.
inline Dataset make_circles(std::size_t n_per_class, const std::vector<double>& radii, double noise_sd,
                            std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("make_circles: n_per_class must be >= 1");
  if (radii.size() < 2) throw ConfigError("make_circles: need at least two radii");
  if (noise_sd < 0.0) throw ConfigError("make_circles: noise_sd must be >= 0");
  Dataset ds{"circles", 2, radii.size(), seed, {}, {}};
  SplitMix64 rng(seed);
  std::vector<std::vector<std::vector<double>>> pts(radii.size());
  for (std::size_t c = 0; c < radii.size(); ++c)
    for (std::size_t k = 0; k < n_per_class; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_per_class);
      const double nx = rng.normal(), ny = rng.normal();
      pts[c].push_back({radii[c] * std::cos(ang) + noise_sd * nx, radii[c] * std::sin(ang) + noise_sd * ny});
    }
  detail::split_classes(pts, ds);
  return ds;
}

// The smooth target map used by make_regression.
inline std::vector<double> regression_target(std::span<const double> x) {
  return {x[0] + 0.3 * std::sin(std::numbers::pi * x[1]), x[1] + 0.3 * std::sin(std::numbers::pi * x[0])};
}

// Inputs uniform on [-1, 1]^2, targets = regression_target(input).
inline Dataset make_regression(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("make_regression: n must be >= 1");
  Dataset ds{"regression", 2, 0, seed, {}, {}};
  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    Split& s = detail::is_test_index(k) ? ds.test : ds.train;
    s.targets.emplace_back(regression_target(x));
    s.inputs.push_back(std::move(x));
  }
  return ds;
}

// CSV export: split,x0..x{d-1},label  (or target0..target{k-1} for regression)
inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
  os << "split";
  for (std::size_t i = 0; i < ds.input_dim; ++i) os << ",x" << i;
  std::size_t target_dim = 0;
  if (ds.is_classification()) {
    os << ",label";
  } else if (!ds.train.targets.empty()) {
    target_dim = std::get<std::vector<double>>(ds.train.targets.front()).size();
    for (std::size_t i = 0; i < target_dim; ++i) os << ",target" << i;
  }
  os << '\n' << std::setprecision(17);
  auto emit = [&](const Split& s, const char* name) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      os << name;
      for (double v : s.inputs[k]) os << ',' << v;
      if (const auto* l = std::get_if<Label>(&s.targets[k])) {
        os << ',' << *l;
      } else {
        for (double v : std::get<std::vector<double>>(s.targets[k])) os << ',' << v;
      }
      os << '\n';
    }
  };
  emit(ds.train, "train");
  emit(ds.test, "test");
}

}  // namespace snopt
