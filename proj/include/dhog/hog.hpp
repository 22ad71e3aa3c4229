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
#include "dhog/tape.hpp"

#include <vector>

namespace dhog {

enum class Orientation { kUnsigned, kSigned };

/// How the global normalization divides: v / sqrt(|v| + eps) (kPaper) or
/// v / sqrt(|v|^2 + eps) (kSquared).
enum class NormStyle { kPaper, kSquared };

struct HogConfig {
  int cell = 8;
  int bins = 9;
  Orientation orientation = Orientation::kUnsigned;
  double epsilon = 1e-4;
  bool normalize = true;
  NormStyle norm_style = NormStyle::kPaper;

  /// 9 unsigned bins over [0, 180).
  static HogConfig dalal() { return {}; }
  /// 18 signed bins over [0, 360).
  static HogConfig signed_orientation() {
    HogConfig c;
    c.bins = 18;
    c.orientation = Orientation::kSigned;
    return c;
  }

  double range() const { return orientation == Orientation::kSigned ? 360.0 : 180.0; }
  double bin_center(int b) const { return b * range() / bins; }
  /// Throws ConfigError unless cell >= 2 and even, bins >= 2, epsilon > 0.
  void validate() const;
};

/// Cell grid (cells_y, cells_x, bins) of orientation histograms.
struct HogDescriptor {
  Tensor grid;
  HogConfig config;

  Index cells_y() const { return grid.rows(); }
  Index cells_x() const { return grid.cols(); }
  Index bins() const { return grid.depth(); }
};

/// Luma weights applied when collapsing RGB to gray.
inline constexpr double kGrayR = 0.299;
inline constexpr double kGrayG = 0.587;
inline constexpr double kGrayB = 0.114;

/// Guards the magnitude square root at zero gradient.
inline constexpr double kMagnitudeGuard = 1e-12;

Var to_gray(Var rgb);
Image to_gray(const Image& img);

struct GradientField {
  Var magnitude;
  Var orientation;  // degrees, folded into [0, range)
};

GradientField gradients(Var gray, const HogConfig& cfg);

/// One plane per bin: magnitude times the circular linear-interpolation
/// weight of the orientation to that bin's center.
std::vector<Var> orientation_filters(Var magnitude, Var orientation, const HogConfig& cfg);

/// Separable 2c x 2c tent whose stride-c translates sum to one.
Kernel make_spatial_kernel(int cell);

/// Rows (or columns) at which the tent-filtered planes are sampled.
std::vector<Index> cell_sample_indices(Index cells, int cell);

/// Unnormalized (cells_y, cells_x, bins) grid.
Var spatial_binning(std::span<const Var> planes, const HogConfig& cfg);

Var normalize(Var v, const HogConfig& cfg);

/// Full differentiable pipeline. `img` is (h, w) gray or (h, w, 3) color.
Var hog_forward(Var img, const HogConfig& cfg);

HogDescriptor compute_hog(const Image& img, const HogConfig& cfg);

/// Direct per-pixel voting loop. Used as the oracle for hog_forward.
HogDescriptor hog_reference(const Image& img, const HogConfig& cfg);

}  // namespace dhog
