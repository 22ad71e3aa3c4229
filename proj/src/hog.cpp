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

#include "dhog/hog.hpp"

#include "dhog/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dhog {

void HogConfig::validate() const {
  if (cell < 2 || cell % 2 != 0) throw ConfigError("cell size must be even and >= 2, got " + std::to_string(cell));
  if (bins < 2) throw ConfigError("bin count must be >= 2");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

Var to_gray(Var rgb) {
  if (rgb.shape().rank() != 3 || rgb.shape()[2] != 3) {
    throw ShapeError("to_gray needs a 3-channel input, got " + rgb.shape().str());
  }
  return channel(rgb, 0) * kGrayR + channel(rgb, 1) * kGrayG + channel(rgb, 2) * kGrayB;
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ShapeError("to_gray needs 1 or 3 channels");
  Image out(img.width, img.height, 1);
  for (Index i = 0; i < img.width * img.height; ++i) {
    out.data[i] = kGrayR * img.data[3 * i] + kGrayG * img.data[3 * i + 1] + kGrayB * img.data[3 * i + 2];
  }
  return out;
}

GradientField gradients(Var gray, const HogConfig& cfg) {
  if (gray.shape().rank() != 2) throw ShapeError("gradients need a 2D input");
  if (gray.shape()[0] < 3 || gray.shape()[1] < 3) throw ShapeError("gradients need extents >= 3");
  // Zero padding: the outermost pixels see an edge against black, which is
  // what ties absolute intensity to the descriptor.
  Var gx = conv2d_same(gray, Kernel(1, 3, {-1.0, 0.0, 1.0}));
  Var gy = conv2d_same(gray, Kernel(3, 1, {-1.0, 0.0, 1.0}));
  Var mag = dhog::sqrt(pow2(gx) + pow2(gy) + kMagnitudeGuard * kMagnitudeGuard);
  Var theta = wrap(atan2(gy, gx), cfg.range());
  return {mag, theta};
}

std::vector<Var> orientation_filters(Var magnitude, Var orientation, const HogConfig& cfg) {
  if (magnitude.shape() != orientation.shape()) throw ShapeError("magnitude/orientation shape mismatch");
  const double range = cfg.range();
  const double slope = cfg.bins / range;
  std::vector<Var> planes;
  planes.reserve(static_cast<std::size_t>(cfg.bins));
  for (int b = 0; b < cfg.bins; ++b) {
    // Signed offset to the bin center on the circle, in [-range/2, range/2).
    Var offset = wrap(orientation + (0.5 * range - cfg.bin_center(b)), range) - 0.5 * range;
    Var weight = clip(affine(dhog::abs(offset), -slope, 1.0), 0.0, 1.0);
    planes.push_back(magnitude * weight);
  }
  return planes;
}

Kernel make_spatial_kernel(int cell) {
  if (cell < 2 || cell % 2 != 0) throw ConfigError("spatial kernel needs an even cell size >= 2");
  std::vector<double> t(static_cast<std::size_t>(2 * cell));
  for (int k = 0; k < 2 * cell; ++k) t[static_cast<std::size_t>(k)] = 1.0 - std::abs(k + 0.5 - cell) / cell;
  return Kernel::separable(t, t);
}

std::vector<Index> cell_sample_indices(Index cells, int cell) {
  // With the kernel anchored at cell - 1, sampling here centers the tent on
  // the cell center i*c + c/2 (pixel p sits at p + 0.5).
  std::vector<Index> idx(static_cast<std::size_t>(cells));
  for (Index i = 0; i < cells; ++i) idx[static_cast<std::size_t>(i)] = i * cell + cell / 2 - 1;
  return idx;
}

Var spatial_binning(std::span<const Var> planes, const HogConfig& cfg) {
  if (planes.empty()) throw ShapeError("spatial_binning: no planes");
  const Index rows = planes[0].shape()[0], cols = planes[0].shape()[1];
  if (rows % cfg.cell != 0 || cols % cfg.cell != 0) {
    throw ConfigError("image extents " + std::to_string(cols) + "x" + std::to_string(rows) +
                      " are not divisible by the cell size " + std::to_string(cfg.cell));
  }
  const Kernel tent = make_spatial_kernel(cfg.cell);
  const std::vector<Index> ri = cell_sample_indices(rows / cfg.cell, cfg.cell);
  const std::vector<Index> ci = cell_sample_indices(cols / cfg.cell, cfg.cell);
  std::vector<Var> cells;
  cells.reserve(planes.size());
  for (const Var& p : planes) cells.push_back(conv2d_subsample(p, tent, ri, ci));
  return stack(cells);
}

Var normalize(Var v, const HogConfig& cfg) {
  Var norm = l2norm(v);
  Var denom = cfg.norm_style == NormStyle::kPaper ? dhog::sqrt(norm + cfg.epsilon)
                                                  : dhog::sqrt(pow2(norm) + cfg.epsilon);
  return v / denom;
}

Var hog_forward(Var img, const HogConfig& cfg) {
  cfg.validate();
  Var gray = img.shape().rank() == 3 ? to_gray(img) : img;
  const GradientField g = gradients(gray, cfg);
  const std::vector<Var> planes = orientation_filters(g.magnitude, g.orientation, cfg);
  Var v = spatial_binning(planes, cfg);
  return cfg.normalize ? normalize(v, cfg) : v;
}

HogDescriptor compute_hog(const Image& img, const HogConfig& cfg) {
  Tape tape;
  Var v = hog_forward(tape.constant(img.to_tensor()), cfg);
  return {v.value(), cfg};
}

HogDescriptor hog_reference(const Image& img, const HogConfig& cfg) {
  cfg.validate();
  const Plane g = to_gray(img).plane(0);
  const Index h = g.rows(), w = g.cols();
  if (h < 3 || w < 3) throw ShapeError("gradients need extents >= 3");
  if (h % cfg.cell != 0 || w % cfg.cell != 0) throw ConfigError("image extents are not divisible by the cell size");
  const Index ny = h / cfg.cell, nx = w / cfg.cell;
  const double range = cfg.range();
  const double c = cfg.cell;
  auto px = [&](Index y, Index x) { return y < 0 || y >= h || x < 0 || x >= w ? 0.0 : g(y, x); };

  Tensor grid(Shape{ny, nx, static_cast<Index>(cfg.bins)});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double gx = px(y, x + 1) - px(y, x - 1);
      const double gy = px(y + 1, x) - px(y - 1, x);
      const double mag = std::sqrt(gx * gx + gy * gy + kMagnitudeGuard * kMagnitudeGuard);
      double theta = 0.0;
      if (gx != 0.0 || gy != 0.0) {
        theta = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
        if (theta <= -180.0) theta = 180.0;
      }
      theta -= range * std::floor(theta / range);
      if (theta >= range) theta -= range;

      // Orientation: split between the two nearest bin centers.
      const double pos = theta * cfg.bins / range;
      const auto lo = static_cast<Index>(std::floor(pos));
      const double frac = pos - static_cast<double>(lo);
      const Index b0 = lo % cfg.bins, b1 = (lo + 1) % cfg.bins;

      // Space: tent weight to every cell whose center is within one cell.
      const double cyf = (y + 0.5) / c - 0.5, cxf = (x + 0.5) / c - 0.5;
      for (Index cy = static_cast<Index>(std::floor(cyf)); cy <= static_cast<Index>(std::floor(cyf)) + 1; ++cy) {
        if (cy < 0 || cy >= ny) continue;
        const double wy = 1.0 - std::abs((y + 0.5) - (cy * c + c / 2)) / c;
        if (wy <= 0.0) continue;
        for (Index cx = static_cast<Index>(std::floor(cxf)); cx <= static_cast<Index>(std::floor(cxf)) + 1; ++cx) {
          if (cx < 0 || cx >= nx) continue;
          const double wx = 1.0 - std::abs((x + 0.5) - (cx * c + c / 2)) / c;
          if (wx <= 0.0) continue;
          grid(cy, cx, b0) += mag * wy * wx * (1.0 - frac);
          grid(cy, cx, b1) += mag * wy * wx * frac;
        }
      }
    }
  }
  if (cfg.normalize) {
    const double norm = std::sqrt(grid.array().square().sum());
    const double denom = cfg.norm_style == NormStyle::kPaper ? std::sqrt(norm + cfg.epsilon)
                                                             : std::sqrt(norm * norm + cfg.epsilon);
    grid.array() /= denom;
  }
  return {grid, cfg};
}

}  // namespace dhog
