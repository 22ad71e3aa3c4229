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

#include "dhog/tape.hpp"

#include <cstdint>
#include <functional>

namespace dhog {

/// Builds a scalar objective on `tape` from the input variable `x`.
using ObjectiveBuilder = std::function<Var(Tape& tape, Var x)>;

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Number of randomly chosen coordinates; 0 checks all of them.
  int coordinates = 64;
  std::uint64_t seed = 0;
  /// Before excluding a coordinate whose perturbation changes a piecewise
  /// branch, retry with the step divided by 10 this many times.
  int shrink_attempts = 0;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  Index worst_coordinate = -1;
  int checked = 0;
  /// Coordinates skipped because x +- h fell on a different piece of a
  /// clip/abs/wrap/atan2/warp than x did.
  int excluded = 0;
  double tolerance = 0.0;

  bool passed() const { return checked > 0 && max_relative_error < tolerance; }
};

/// Compares backward-pass adjoints with central differences. Relative error
/// is |a - n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(const ObjectiveBuilder& f, const Tensor& x, const GradcheckOptions& options = {});

}  // namespace dhog
