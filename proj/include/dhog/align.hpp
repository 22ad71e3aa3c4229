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

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace dhog {

/// Similarity transform of the template about its center.
struct Pose2D {
  double tx = 0.0;     // pixels
  double ty = 0.0;     // pixels
  double r = 0.0;      // degrees
  double sigma = 0.0;  // log-scale
};

enum class PoseParam { kTx, kTy, kR, kSigma };

struct AlignmentProblem {
  Image template_image;  // gray; larger than the patch leaves room to move
  HogDescriptor target;  // phi of the observed patch
  HogConfig cfg;
  Index patch_width = 0;
  Index patch_height = 0;
  int restarts = 8;
  std::optional<Pose2D> seed;  // start pose for tx, ty, sigma and the first angle

  void validate() const;
};

/// Squared-norm normalization keeps S a scaled cosine, so zooming in on
/// busier texture cannot inflate it.
HogConfig default_alignment_config();

/// Builds the problem from a template and an observed patch image.
AlignmentProblem make_alignment_problem(const Image& template_image, const Image& patch, const HogConfig& cfg,
                                        int restarts = 8);

struct AlignOptimizerConfig {
  double momentum = 0.9;
  /// Per-parameter steps of the momentum ascent.
  double step_translation = 20.0;
  double step_rotation = 200.0;
  double step_sigma = 0.05;
  int max_iterations = 150;
  /// Stop when the best S rose by less than this fraction over `window` iterations.
  double tolerance = 1e-5;
  int window = 15;
  /// Iterations on (tx, ty, r) followed by iterations on sigma alone.
  int pose_block = 10;
  int sigma_block = 5;
  /// Restarts run concurrently on up to this many threads.
  int threads = 1;

  void validate() const;
};

/// S = phi(warp(template, pose)) . target on the tape of the pose variables.
Var similarity(const PoseVars& pose, const AlignmentProblem& p);

struct SimilarityEval {
  double value;
  std::array<double, 4> gradient;  // d/d(tx, ty, r, sigma)
};
SimilarityEval evaluate_similarity(const Pose2D& pose, const AlignmentProblem& p);

struct SweepRow {
  double value;
  double s;
  double ds;
};
/// Evaluates S and its analytic derivative along one parameter, the others
/// held at `base`.
std::vector<SweepRow> sweep(const AlignmentProblem& p, PoseParam param, std::span<const double> grid,
                            const Pose2D& base = {});

struct PoseTraceRow {
  int iteration;
  Pose2D pose;
  double s;
};

struct RestartTrace {
  Pose2D start;
  Pose2D best;
  double best_s = 0.0;
  bool diverged = false;
  std::vector<PoseTraceRow> rows;
};

struct AlignmentResult {
  Pose2D pose;  // r folded into [0, 360)
  double s = 0.0;
  int restart = -1;
  std::vector<RestartTrace> restarts;
};

/// Momentum ascent from restarts.size() equally spaced angles; the best final
/// S wins, ties to the lowest index. Throws DivergenceError if every restart
/// diverged.
AlignmentResult estimate_pose(const AlignmentProblem& p, const AlignOptimizerConfig& opt);

/// Applies warp_bilinear to a gray image.
Image warp_image(const Image& img, const Pose2D& pose, Index width, Index height);

/// Shortest signed angular difference a - b in degrees, in (-180, 180].
double angle_difference(double a, double b);

}  // namespace dhog
