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

#include "dhog/tensor.hpp"

#include "dhog/error.hpp"

#include <sstream>
#include <utility>

namespace dhog {

Shape::Shape(std::initializer_list<Index> extents) {
  if (extents.size() > 3) throw ShapeError("tensors have at most 3 dimensions");
  for (Index e : extents) {
    if (e < 1) throw ShapeError("tensor extents must be >= 1");
    dims_[static_cast<std::size_t>(rank_++)] = e;
  }
}

Index Shape::size() const { return dims_[0] * dims_[1] * dims_[2]; }

bool Shape::operator==(const Shape& other) const {
  return rank_ == other.rank_ && dims_ == other.dims_;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (int d = 0; d < rank_; ++d) os << (d ? "," : "") << dims_[static_cast<std::size_t>(d)];
  os << ')';
  return os.str();
}

Tensor::Tensor(const Shape& shape, double fill)
    : shape_(shape), data_(Eigen::ArrayXd::Constant(shape.size(), fill)) {}

Tensor::Tensor(const Shape& shape, Eigen::ArrayXd data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

}  // namespace dhog
