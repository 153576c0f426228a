// Copyright 2026 The fedrf Authors. All Rights Reserved.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace fedrf {

struct GradCheckOptions {
  double eps = 1e-6;
  /// 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Compares an analytic gradient with central differences.
///
/// `f(w, grad)` returns the scalar objective at `w` and, when `grad` is
/// non-null, writes the analytic gradient into it. Returns the largest
/// |analytic - numeric| / max(1, |analytic|) over the checked coordinates.
template <typename F>
double grad_check(F&& f, std::span<const double> start, const GradCheckOptions& opt = {}) {
  std::vector<double> point(start.begin(), start.end());
  std::vector<double> analytic(point.size(), 0.0);
  f(std::span<const double>(point), &analytic);

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opt.max_coords != 0 && opt.max_coords < coords.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.max_coords);
  }

  double worst = 0.0;
  for (const std::size_t i : coords) {
    const double saved = point[i];
    point[i] = saved + opt.eps;
    const double up = f(std::span<const double>(point), nullptr);
    point[i] = saved - opt.eps;
    const double down = f(std::span<const double>(point), nullptr);
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace fedrf
