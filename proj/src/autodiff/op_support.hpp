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

#include "dhog/error.hpp"
#include "dhog/tape.hpp"

#include <string>

namespace dhog::detail {

inline void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ShapeError("operands recorded on different tapes");
}

inline void require_2d(Var a, const char* op) {
  if (a.shape().rank() != 2) {
    throw ShapeError(std::string(op) + " needs a 2D input, got " + a.shape().str());
  }
}

/// Adds `contrib` into the adjoint of node `id`. A single-element node that
/// was broadcast receives the sum of the contributions.
template <typename Derived>
void accumulate(Tape& t, std::size_t id, const Eigen::ArrayBase<Derived>& contrib) {
  if (!t.needs_grad(id)) return;
  Tensor& slot = t.adjoint_slot(id);
  if (slot.size() == contrib.size()) {
    slot.array() += contrib;
  } else {
    slot.array() += contrib.sum();
  }
}

/// Reads element i of an operand that is either full-size or a broadcast scalar.
struct Operand {
  const double* data;
  bool scalar;
  double operator[](Index i) const { return scalar ? data[0] : data[i]; }
};

inline Operand operand(const Tensor& t, Index n) { return {t.data(), t.size() == 1 && n != 1}; }

}  // namespace dhog::detail
