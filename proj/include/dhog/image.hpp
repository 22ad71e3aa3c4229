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

#include "dhog/tensor.hpp"

#include <Eigen/Core>

namespace dhog {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Intensities in [0, 1], row-major with channels interleaved.
struct Image {
  Index width = 0;
  Index height = 0;
  Index channels = 1;
  Eigen::ArrayXd data;

  Image() = default;
  Image(Index width, Index height, Index channels, double fill = 0.0);

  static Image from_plane(const Plane& p);
  /// Accepts (rows, cols) or (rows, cols, 1|3) tensors.
  static Image from_tensor(const Tensor& t);

  double& at(Index y, Index x, Index c = 0) { return data[(y * width + x) * channels + c]; }
  double at(Index y, Index x, Index c = 0) const { return data[(y * width + x) * channels + c]; }

  Plane plane(Index c = 0) const;
  /// (height, width) for gray images, (height, width, 3) for color.
  Tensor to_tensor() const;

  Image clamped() const;
};

/// Keeps the centered region whose extents are multiples of `multiple`.
Image center_crop_to_multiple(const Image& img, Index multiple);

/// Integer-factor box-filter reduction of each channel.
Image downsample_box(const Image& img, Index factor);

}  // namespace dhog
