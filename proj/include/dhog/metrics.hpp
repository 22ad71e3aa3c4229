// Copyright 2026 The dhog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.


#pragma once

#include "dhog/image.hpp"

namespace dhog {

inline constexpr int kDefaultMiBins = 32;

struct MetricReport {
  double cross_correlation = 0.0;      // Pearson
  double raw_cross_correlation = 0.0;  // sum(ab) / sqrt(sum(a^2) sum(b^2))
  double mutual_information = 0.0;     // bits
  double ssim = 0.0;
};

// All metrics take gray images (RGB inputs go through to_gray) of equal
// extents and throw ShapeError otherwise.

/// Pearson correlation. Degenerate (std < 1e-12) inputs give 1 if both are
/// constant, 0 if only one is.
double cross_correlation(const Image& a, const Image& b);
/// Uncentered normalized correlation. All-zero inputs follow the same rule.
double raw_cross_correlation(const Image& a, const Image& b);
/// From the joint histogram with `bins` uniform bins over [0, 1] per axis.
double mutual_information(const Image& a, const Image& b, int bins = kDefaultMiBins);
/// Mean SSIM over all fully covered 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1).
double ssim(const Image& a, const Image& b);

MetricReport compare_images(const Image& a, const Image& b, int bins = kDefaultMiBins);

}  // namespace dhog
