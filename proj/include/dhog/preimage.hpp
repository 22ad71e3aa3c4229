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

#include "dhog/hog.hpp"
#include "dhog/image.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace dhog {

/// Smoothing of |i_p - i_q| in the neighbor penalty.
inline constexpr double kSmoothnessDelta = 1e-9;

enum class Schedule { kSingle, kMultiScale, kMultiScaleMore };
enum class Init { kGray, kNoise };
enum class Method { kMomentum, kDogleg };

struct OptimizerConfig {
  Method method = Method::kMomentum;
  double step = 1e-3;
  double momentum = 0.9;
  int max_iterations = 300;  // per stage
  /// Stop when the best energy fell by less than this fraction over `window` iterations.
  double tolerance = 1e-6;
  int window = 10;
  /// Stop as soon as E drops to this value.
  double energy_floor = 1e-9;
  /// Linearly anneal xi to zero over each stage.
  bool xi_decay = false;
  /// Momentum only: on a stalled window, halve the step and restart the
  /// velocity up to this many times before stopping.
  int step_halvings = 0;
  /// Conjugate-gradient iterations per Gauss-Newton solve (dogleg).
  int cg_iterations = 20;

  void validate() const;
};

/// Scale factors s; a stage at s works on an image sqrt(s) times smaller.
inline constexpr int kScaleLadder[] = {64, 16, 4, 1};

struct ReconstructionProblem {
  /// Keyed by s. Single and multi-scale read only s = 1.
  std::map<int, HogDescriptor> targets;
  HogConfig cfg;  // epsilon and norm style; geometry comes from the targets
  double xi = 1e2;
  Schedule schedule = Schedule::kSingle;
  Init init = Init::kGray;
  std::uint64_t seed = 0;
};

struct TraceRow {
  int iteration;
  int stage;  // scale factor s
  double energy;
  double feature;
  double smoothness;  // unweighted
};

struct Reconstruction {
  Image image;
  std::vector<TraceRow> trace;
};

struct ObjectiveTerms {
  Var total;
  Var feature;
  Var smoothness;
};

/// Sum over 4-neighbor pairs of sqrt((i_p - i_q)^2 + delta^2).
Var smoothness(Var img);

/// ||phi(img) - target|| + xi * smoothness(img). `img` is a gray (h, w) plane.
ObjectiveTerms objective_terms(Var img, const HogDescriptor& target, const HogConfig& cfg, double xi);
Var objective(Var img, const HogDescriptor& target, const HogConfig& cfg, double xi);

/// Geometry of `target` merged with the normalization settings of `cfg`.
HogConfig stage_config(const HogDescriptor& target, const HogConfig& cfg);

Image initial_estimate(Index width, Index height, Init init, std::uint64_t seed);

/// Runs one stage from `start`; returns the best iterate. Throws
/// DivergenceError once E exceeds 1e6 times its initial value.
Reconstruction minimize(const Image& start, const HogDescriptor& target, const HogConfig& cfg, double xi,
                        const OptimizerConfig& opt, int stage = 1);

Reconstruction reconstruct_single(const ReconstructionProblem& p, const OptimizerConfig& opt);
/// Coarse-to-fine against the one full-resolution target, shrinking the cell
/// with the image. Stages whose cell would drop below 2 are skipped.
Reconstruction reconstruct_multiscale(const ReconstructionProblem& p, const OptimizerConfig& opt);
/// Coarse-to-fine with a separate target per scale at a fixed cell size.
Reconstruction reconstruct_multiscale_more(const ReconstructionProblem& p, const OptimizerConfig& opt);
/// Dispatches on p.schedule.
Reconstruction reconstruct(const ReconstructionProblem& p, const OptimizerConfig& opt);

/// Scales of the ladder usable at fixed cell size for an image of the given extents.
std::vector<int> multiscale_more_stages(Index width, Index height, int cell);

/// Per-scale targets from box-downsampled copies of `original`.
std::map<int, HogDescriptor> multiscale_targets(const Image& original, const HogConfig& cfg);

/// Bilinear resize of a gray image (same sampling as resize_bilinear).
Image resize_image(const Image& img, Index width, Index height);

/// iteration,stage,E,feature,smoothness
void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

}  // namespace dhog
