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


#include "dhog/align.hpp"

#include "dhog/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace dhog {

namespace {

Tensor gray_plane(const Image& img) {
  const Image g = img.channels == 3 ? to_gray(img) : img;
  return Tensor(Shape{g.height, g.width}, g.data);
}

double fold_degrees(double r) {
  const double f = std::fmod(r, 360.0);
  return f < 0.0 ? f + 360.0 : f;
}

// A restart that wanders this far has left the template for good.
bool out_of_range(const Pose2D& q, const AlignmentProblem& p) {
  const double reach = static_cast<double>(std::max(p.template_image.width, p.template_image.height));
  return !(std::abs(q.tx) <= reach && std::abs(q.ty) <= reach && std::abs(q.sigma) <= 2.0 && std::isfinite(q.r));
}

}  // namespace

void AlignmentProblem::validate() const {
  cfg.validate();
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  if (patch_width < 3 || patch_height < 3) throw ConfigError("patch is too small");
  if (patch_width % cfg.cell != 0 || patch_height % cfg.cell != 0) {
    throw ConfigError("patch extents must be divisible by the cell size");
  }
  const Shape expect{patch_height / cfg.cell, patch_width / cfg.cell, cfg.bins};
  if (target.grid.shape() != expect) {
    throw ConfigError("target descriptor " + target.grid.shape().str() + " does not match patch grid " + expect.str());
  }
}

HogConfig default_alignment_config() {
  HogConfig c;
  c.norm_style = NormStyle::kSquared;
  return c;
}

AlignmentProblem make_alignment_problem(const Image& template_image, const Image& patch, const HogConfig& cfg,
                                        int restarts) {
  AlignmentProblem p;
  p.template_image = template_image.channels == 3 ? to_gray(template_image) : template_image;
  p.cfg = cfg;
  p.patch_width = patch.width;
  p.patch_height = patch.height;
  p.restarts = restarts;
  if (patch.width % cfg.cell != 0 || patch.height % cfg.cell != 0) {
    throw ConfigError("patch extents must be divisible by the cell size");
  }
  p.target = compute_hog(patch, cfg);
  p.validate();
  return p;
}

void AlignOptimizerConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(step_translation > 0.0 && step_rotation > 0.0 && step_sigma > 0.0)) {
    throw ConfigError("pose step sizes must be positive");
  }
  if (max_iterations < 0 || window < 1) throw ConfigError("bad iteration settings");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (pose_block < 1 || sigma_block < 0) throw ConfigError("interleave block lengths must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

Var similarity(const PoseVars& pose, const AlignmentProblem& p) {
  Tape& tape = pose.tx.tape();
  Var tmpl = tape.constant(gray_plane(p.template_image));
  Var patch = warp_bilinear(tmpl, pose, p.patch_height, p.patch_width);
  return dot(hog_forward(patch, p.cfg), tape.constant(p.target.grid));
}

SimilarityEval evaluate_similarity(const Pose2D& q, const AlignmentProblem& p) {
  Tape tape;
  const PoseVars pv{tape.scalar_variable(q.tx), tape.scalar_variable(q.ty), tape.scalar_variable(q.r),
                    tape.scalar_variable(q.sigma)};
  Var s = similarity(pv, p);
  tape.backward(s);
  return {s.item(),
          {tape.grad(pv.tx).item(), tape.grad(pv.ty).item(), tape.grad(pv.r).item(), tape.grad(pv.sigma).item()}};
}

std::vector<SweepRow> sweep(const AlignmentProblem& p, PoseParam param, std::span<const double> grid,
                            const Pose2D& base) {
  p.validate();
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double v : grid) {
    Pose2D q = base;
    switch (param) {
      case PoseParam::kTx: q.tx = v; break;
      case PoseParam::kTy: q.ty = v; break;
      case PoseParam::kR: q.r = v; break;
      case PoseParam::kSigma: q.sigma = v; break;
    }
    const SimilarityEval e = evaluate_similarity(q, p);
    rows.push_back({v, e.value, e.gradient[static_cast<std::size_t>(param)]});
  }
  return rows;
}

namespace {

RestartTrace run_restart(const AlignmentProblem& p, const AlignOptimizerConfig& opt, int k) {
  const Pose2D seed = p.seed.value_or(Pose2D{});
  const int cycle = opt.pose_block + opt.sigma_block;
  RestartTrace rt;
  rt.start = seed;
  rt.start.r = seed.r + 360.0 * k / p.restarts;
  Pose2D q = rt.start;
  std::array<double, 4> velocity{};
  const std::array<double, 4> step{opt.step_translation, opt.step_translation, opt.step_rotation, opt.step_sigma};
  rt.best_s = -std::numeric_limits<double>::infinity();
  std::vector<double> best_history;
  for (int it = 0;; ++it) {
    SimilarityEval e{};
    try {
      e = evaluate_similarity(q, p);
    } catch (const NumericError&) {
      rt.diverged = true;
      break;
    }
    if (!std::isfinite(e.value)) {
      rt.diverged = true;
      break;
    }
    rt.rows.push_back({it, q, e.value});
    if (e.value > rt.best_s) {
      rt.best_s = e.value;
      rt.best = q;
    }
    best_history.push_back(rt.best_s);
    if (it >= opt.max_iterations) break;
    if (best_history.size() > static_cast<std::size_t>(opt.window)) {
      const double before = best_history[best_history.size() - 1 - static_cast<std::size_t>(opt.window)];
      if (rt.best_s - before <= opt.tolerance * std::abs(before)) break;
    }
    // (tx, ty, r) for pose_block iterations, then sigma alone.
    const bool sigma_phase = (it % cycle) >= opt.pose_block;
    for (std::size_t j = 0; j < 4; ++j) {
      const bool active = sigma_phase ? j == 3 : j < 3;
      velocity[j] = active ? opt.momentum * velocity[j] + step[j] * e.gradient[j] : 0.0;
    }
    q.tx += velocity[0];
    q.ty += velocity[1];
    q.r += velocity[2];
    q.sigma += velocity[3];
    if (out_of_range(q, p)) {
      rt.diverged = rt.rows.size() <= 1;
      break;
    }
  }
  return rt;
}

}  // namespace

AlignmentResult estimate_pose(const AlignmentProblem& p, const AlignOptimizerConfig& opt) {
  p.validate();
  opt.validate();
  AlignmentResult result;
  result.restarts.resize(static_cast<std::size_t>(p.restarts));
  // Restarts are independent, one tape each; slots keep the merge order fixed.
  const int workers = std::min(opt.threads, p.restarts);
  if (workers <= 1) {
    for (int k = 0; k < p.restarts; ++k) result.restarts[static_cast<std::size_t>(k)] = run_restart(p, opt, k);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int k = next++; k < p.restarts; k = next++) {
          try {
            result.restarts[static_cast<std::size_t>(k)] = run_restart(p, opt, k);
          } catch (...) {
            const std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (std::size_t k = 0; k < result.restarts.size(); ++k) {
    const RestartTrace& rt = result.restarts[k];
    if (rt.diverged) continue;
    if (result.restart < 0 || rt.best_s > result.s) {
      result.restart = static_cast<int>(k);
      result.s = rt.best_s;
      result.pose = rt.best;
    }
  }
  if (result.restart < 0) throw DivergenceError("all pose restarts diverged");
  result.pose.r = fold_degrees(result.pose.r);
  return result;
}

Image warp_image(const Image& img, const Pose2D& q, Index width, Index height) {
  Tape tape;
  const PoseVars pv{tape.scalar_constant(q.tx), tape.scalar_constant(q.ty), tape.scalar_constant(q.r),
                    tape.scalar_constant(q.sigma)};
  return Image::from_tensor(warp_bilinear(tape.constant(gray_plane(img)), pv, height, width).value());
}

double angle_difference(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

}  // namespace dhog
