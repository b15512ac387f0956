// Copyright 2026 The svcanchor Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SVCANCHOR_STATS_HPP_
#define SVCANCHOR_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "svcanchor/common.hpp"

namespace svcanchor::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// n-1 denominator; 0 for fewer than two samples.
inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Location/scale pair for z-scoring; a zero scale maps everything to 0.
struct Standardizer {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;

  // Spread at the level of round-off counts as none, so equal values that
  // differ in the last bit do not standardize to +-1.
  static Standardizer fit(std::span<const double> xs) {
    double m = stats::mean(xs);
    double sd = sample_sd(xs);
    if (sd <= 1e-12 * std::max(1.0, std::fabs(m))) sd = 0.0;
    return {m, sd, xs.size()};
  }

  // Fewer than two samples, or no spread.
  bool low_confidence() const { return count < 2 || !(sd > 0.0); }

  double operator()(double x) const {
    if (low_confidence()) return 0.0;
    return (x - mean) / sd;
  }
};

inline std::vector<double> zscores(std::span<const double> xs) {
  auto s = Standardizer::fit(xs);
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(s(x));
  return out;
}

// sorted[ceil(fraction * n) - 1]. At most (1 - fraction) * n samples lie
// strictly above it and at most fraction * n strictly below it.
inline double order_statistic(std::vector<double> xs, double fraction) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  auto n = static_cast<double>(xs.size());
  auto idx = static_cast<long>(std::ceil(fraction * n - 1e-12)) - 1;
  idx = std::clamp(idx, 0L, static_cast<long>(xs.size()) - 1);
  return xs[static_cast<std::size_t>(idx)];
}

}  // namespace svcanchor::stats

#endif  // SVCANCHOR_STATS_HPP_
