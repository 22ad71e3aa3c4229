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

#include "dhog/gradcheck.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dhog {

enum class GradcheckTarget { kPrimitives, kHog, kObjective, kPose };

struct GradcheckSuiteOptions {
  int trials = 1;  // random inputs per check
  /// Overrides the per-target finite-difference step.
  std::optional<double> step;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  Index size = 64;  // image extent for the hog, objective and pose checks
  /// Applied to the checked variable before it enters the objective.
  std::function<Var(Var)> input_hook;
};

struct GradcheckLine {
  std::string target;
  std::string name;
  GradcheckReport report;  // merged over trials
};

/// Finite-difference checks of one target family, one line per check.
std::vector<GradcheckLine> run_gradchecks(GradcheckTarget what, const GradcheckSuiteOptions& options);

inline bool all_passed(const std::vector<GradcheckLine>& lines) {
  for (const GradcheckLine& l : lines) {
    if (!l.report.passed()) return false;
  }
  return !lines.empty();
}

}  // namespace dhog
