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

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>

namespace dhog {

using Index = Eigen::Index;

/// Extents of a tensor of rank 0..3. Rank 0 is a scalar with one element.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> extents);

  static Shape scalar() { return {}; }

  int rank() const { return rank_; }
  Index operator[](int d) const { return dims_[static_cast<std::size_t>(d)]; }
  Index size() const;

  bool operator==(const Shape& other) const;
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string str() const;

 private:
  std::array<Index, 3> dims_{1, 1, 1};
  int rank_ = 0;
};

/// Dense row-major array of doubles. 2D tensors are (rows, cols); 3D
/// tensors are (rows, cols, depth) with depth varying fastest.
class Tensor {
 public:
  using RowMajorMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstRowMajorMap =
      Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() : data_(Eigen::ArrayXd::Zero(1)) {}
  explicit Tensor(const Shape& shape, double fill = 0.0);
  Tensor(const Shape& shape, Eigen::ArrayXd data);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index size() const { return data_.size(); }
  Index rows() const { return shape_[0]; }
  Index cols() const { return shape_[1]; }
  Index depth() const { return shape_[2]; }

  Eigen::ArrayXd& array() { return data_; }
  const Eigen::ArrayXd& array() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }
  double& operator()(Index r, Index c) { return data_[r * cols() + c]; }
  double operator()(Index r, Index c) const { return data_[r * cols() + c]; }
  double& operator()(Index r, Index c, Index d) { return data_[(r * cols() + c) * depth() + d]; }
  double operator()(Index r, Index c, Index d) const {
    return data_[(r * cols() + c) * depth() + d];
  }

  double item() const { return data_[0]; }

  /// 2D view (rows x cols*depth).
  RowMajorMap matrix() { return {data_.data(), rows(), size() / rows()}; }
  ConstRowMajorMap matrix() const { return {data_.data(), rows(), size() / rows()}; }

  // A finite sum settles it cheaply; only an overflowing or NaN sum needs the
  // element scan.
  bool all_finite() const { return std::isfinite(data_.sum()) || data_.allFinite(); }

  void set_zero() { data_.setZero(); }

 private:
  Shape shape_;
  Eigen::ArrayXd data_;
};

}  // namespace dhog
