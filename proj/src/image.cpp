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

#include "dhog/image.hpp"

#include "dhog/error.hpp"

namespace dhog {

Image::Image(Index w, Index h, Index c, double fill)
    : width(w), height(h), channels(c), data(Eigen::ArrayXd::Constant(w * h * c, fill)) {
  if (w < 1 || h < 1) throw ShapeError("image extents must be >= 1");
  if (c != 1 && c != 3) throw ShapeError("images have 1 or 3 channels");
}

Image Image::from_plane(const Plane& p) {
  Image img(p.cols(), p.rows(), 1);
  Eigen::Map<Plane>(img.data.data(), p.rows(), p.cols()) = p;
  return img;
}

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() == 2) {
    Image img(t.cols(), t.rows(), 1);
    img.data = t.array();
    return img;
  }
  if (t.rank() == 3 && (t.depth() == 1 || t.depth() == 3)) {
    Image img(t.cols(), t.rows(), t.depth());
    img.data = t.array();
    return img;
  }
  throw ShapeError("cannot view tensor of shape " + t.shape().str() + " as an image");
}

Plane Image::plane(Index c) const {
  if (c < 0 || c >= channels) throw ShapeError("channel index out of range");
  Plane p(height, width);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) p(y, x) = at(y, x, c);
  return p;
}

Tensor Image::to_tensor() const {
  if (channels == 1) return Tensor(Shape{height, width}, data);
  return Tensor(Shape{height, width, channels}, data);
}

Image Image::clamped() const {
  Image out = *this;
  out.data = out.data.max(0.0).min(1.0);
  return out;
}

Image center_crop_to_multiple(const Image& img, Index multiple) {
  if (multiple < 1) throw ConfigError("crop multiple must be >= 1");
  const Index w = img.width / multiple * multiple;
  const Index h = img.height / multiple * multiple;
  if (w < 1 || h < 1) throw ConfigError("image is smaller than one cell");
  const Index x0 = (img.width - w) / 2, y0 = (img.height - h) / 2;
  Image out(w, h, img.channels);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + y0, x + x0, c);
  return out;
}

Image downsample_box(const Image& img, Index factor) {
  if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
    throw ConfigError("downsample factor must divide both image extents");
  }
  Image out(img.width / factor, img.height / factor, img.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (Index y = 0; y < out.height; ++y) {
    for (Index x = 0; x < out.width; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (Index dy = 0; dy < factor; ++dy)
          for (Index dx = 0; dx < factor; ++dx) s += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = s * inv;
      }
    }
  }
  return out;
}

}  // namespace dhog
