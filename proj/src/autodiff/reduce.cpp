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

#include "autodiff/op_support.hpp"
#include "dhog/testing.hpp"

#include <cmath>

namespace dhog {

using detail::accumulate;

Var sum(Var a) {
  return a.tape().record(
      OpTag::kSum, Tensor::scalar(a.value().array().sum()), {a.id()},
      [](Tape& t, const Node& self) {
        const Index n = t.node(self.parents[0]).value.size();
        accumulate(t, self.parents[0], Eigen::ArrayXd::Constant(n, self.adjoint.item()));
      },
      [](const Tape& t, const Node& self) { return Tensor::scalar(t.tangent(self.parents[0]).array().sum()); });
}

Var dot(Var a, Var b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  return a.tape().record(
      OpTag::kDot, Tensor::scalar((a.value().array() * b.value().array()).sum()), {a.id(), b.id()},
      [](Tape& t, const Node& self) {
        const double g = self.adjoint.item();
        accumulate(t, self.parents[0], g * t.node(self.parents[1]).value.array());
        accumulate(t, self.parents[1], g * t.node(self.parents[0]).value.array());
      },
      [](const Tape& t, const Node& self) {
        return Tensor::scalar((t.tangent(self.parents[0]).array() * t.node(self.parents[1]).value.array() +
                               t.node(self.parents[0]).value.array() * t.tangent(self.parents[1]).array())
                                  .sum());
      });
}

Var l2norm(Var a) {
  const double norm = std::sqrt(a.value().array().square().sum());
  // The zero vector has zero adjoint.
  auto slope = [](const Tensor& x, double norm) {
    return Eigen::ArrayXd(norm > 0.0 ? Eigen::ArrayXd(x.array() / norm) : Eigen::ArrayXd::Zero(x.size()));
  };
  return a.tape().record(
      OpTag::kL2Norm, Tensor::scalar(norm), {a.id()},
      [slope](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], self.adjoint.item() * slope(t.node(self.parents[0]).value, self.value.item()));
      },
      [slope](const Tape& t, const Node& self) {
        return Tensor::scalar(
            (slope(t.node(self.parents[0]).value, self.value.item()) * t.tangent(self.parents[0]).array()).sum());
      });
}

namespace testing {

Var corrupt_adjoint(Var a, double factor) {
  return a.tape().record(
      OpTag::kCorrupt, a.value(), {a.id()},
      [factor](Tape& t, const Node& self) { accumulate(t, self.parents[0], factor * self.adjoint.array()); },
      [factor](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(), Eigen::ArrayXd(factor * t.tangent(self.parents[0]).array()));
      });
}

}  // namespace testing

}  // namespace dhog
