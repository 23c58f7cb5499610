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

#include <cmath>
#include <cstdint>
#include <numbers>

namespace snopt {

// SplitMix64 used as a counter-based generator: the k-th draw of a stream is
// mix(seed + (k + 1) * golden_gamma), so any draw can be recomputed from
// (seed, k) alone and streams are bit-identical on every platform.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) : seed_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t counter) noexcept {
    return mix(seed + (counter + 1) * kGoldenGamma);
  }

  std::uint64_t next_u64() noexcept { return at(seed_, counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two draws per call so the stream position stays a
  // simple function of the number of normals requested.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = next_u64();
    while (r >= limit);
    return r % n;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Derives an independent stream seed from a parent seed and a label.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) noexcept {
  return SplitMix64::mix(parent ^ SplitMix64::mix(label + SplitMix64::kGoldenGamma));
}

}  // namespace snopt
