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

#include "dhog/gradcheck.hpp"

#include "dhog/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace dhog {

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const ObjectiveBuilder& f, const Tensor& x) {
  Tape tape;
  tape.set_track_branches(true);
  Var out = f(tape, tape.variable(x));
  if (out.value().size() != 1) throw ShapeError("gradcheck: objective is not scalar");
  return {out.item(), tape.branch_signature()};
}

}  // namespace

GradcheckReport gradcheck(const ObjectiveBuilder& f, const Tensor& x, const GradcheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("gradcheck: step must be positive");

  Tensor analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    tape.set_track_branches(true);
    Var xv = tape.variable(x);
    Var out = f(tape, xv);
    if (out.value().size() != 1) throw ShapeError("gradcheck: objective is not scalar");
    base_signature = tape.branch_signature();
    tape.backward(out);
    analytic = tape.grad(xv);
  }

  std::vector<Index> coords(static_cast<std::size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), Index{0});
  if (options.coordinates > 0 && options.coordinates < x.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.coordinates));
    std::sort(coords.begin(), coords.end());
  }

  GradcheckReport report;
  report.tolerance = options.tolerance;
  Tensor probe = x;
  for (Index c : coords) {
    double h = options.step;
    bool same_piece = false;
    double numeric = 0.0;
    for (int attempt = 0; attempt <= options.shrink_attempts; ++attempt, h /= 10.0) {
      probe[c] = x[c] + h;
      const Evaluation plus = evaluate(f, probe);
      probe[c] = x[c] - h;
      const Evaluation minus = evaluate(f, probe);
      probe[c] = x[c];
      if (plus.signature == base_signature && minus.signature == base_signature) {
        numeric = (plus.value - minus.value) / (2.0 * h);
        same_piece = true;
        break;
      }
    }
    if (!same_piece) {
      ++report.excluded;
      continue;
    }
    const double a = analytic[c];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    ++report.checked;
    if (rel > report.max_relative_error || report.worst_coordinate < 0) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      if (rel >= report.max_relative_error) report.worst_coordinate = c;
    }
  }
  return report;
}

}  // namespace dhog
