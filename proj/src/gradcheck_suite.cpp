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


#include "dhog/gradcheck_suite.hpp"

#include "dhog/align.hpp"
#include "dhog/error.hpp"
#include "dhog/hog.hpp"
#include "dhog/preimage.hpp"

#include <random>

namespace dhog {

namespace {

Tensor uniform(const Shape& s, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (Index i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

void merge(GradcheckReport& into, const GradcheckReport& r) {
  if (r.max_relative_error >= into.max_relative_error) {
    into.max_relative_error = r.max_relative_error;
    into.worst_coordinate = r.worst_coordinate;
  }
  into.checked += r.checked;
  into.excluded += r.excluded;
}

class Runner {
 public:
  Runner(const char* target, const GradcheckSuiteOptions& o) : target_(target), o_(o) {
    if (o.trials < 1) throw ConfigError("gradcheck trials must be >= 1");
    if (o.step && !(*o.step > 0.0)) throw ConfigError("gradcheck step must be positive");
  }

  // `make(trial)` returns the objective and the point to check it at.
  void add(const std::string& name, double default_step, int coordinates, int shrink,
           const std::function<std::pair<ObjectiveBuilder, Tensor>(std::uint64_t)>& make) {
    GradcheckLine line{target_, name, {}};
    line.report.tolerance = o_.tolerance;
    for (int k = 0; k < o_.trials; ++k) {
      const std::uint64_t seed = o_.seed * 1000003ULL + static_cast<std::uint64_t>(k) * 7919ULL + lines_.size();
      auto [f, x] = make(seed);
      ObjectiveBuilder hooked = o_.input_hook
                                    ? ObjectiveBuilder([f = f, hook = o_.input_hook](Tape& t, Var v) {
                                        return f(t, hook(v));
                                      })
                                    : f;
      GradcheckOptions g;
      g.step = o_.step.value_or(default_step);
      g.tolerance = o_.tolerance;
      g.coordinates = coordinates;
      g.seed = seed;
      g.shrink_attempts = shrink;
      merge(line.report, gradcheck(hooked, x, g));
    }
    lines_.push_back(std::move(line));
  }

  std::vector<GradcheckLine> take() { return std::move(lines_); }

 private:
  const char* target_;
  const GradcheckSuiteOptions& o_;
  std::vector<GradcheckLine> lines_;
};

// Scalar probe of an array-valued op: a random linear functional.
ObjectiveBuilder probe(std::function<Var(Tape&, Var)> op, const Shape& out, std::uint64_t seed) {
  const Tensor w = uniform(out, seed ^ 0x9e3779b97f4a7c15ULL, -1.0, 1.0);
  return [op = std::move(op), w](Tape& t, Var x) { return dot(op(t, x), t.constant(w)); };
}

std::vector<GradcheckLine> primitives(const GradcheckSuiteOptions& o) {
  Runner run("primitives", o);
  const Shape s{10, 10};
  const auto add = [&](const std::string& name, std::function<Var(Tape&, Var)> op, const Shape& out, double lo,
                       double hi, const Shape& in = Shape{10, 10}) {
    run.add(name, 1e-6, 0, 0, [=](std::uint64_t seed) {
      return std::make_pair(probe(op, out, seed), uniform(in, seed, lo, hi));
    });
  };
  const Tensor other = uniform(s, 3, 0.5, 2.0);
  const std::vector<Index> rows{0, 3, 3, 9}, cols{1, 2, 8};
  add("add", [&](Tape& t, Var v) { return v + t.constant(other); }, s, -2, 2);
  add("sub", [&](Tape& t, Var v) { return t.constant(other) - v; }, s, -2, 2);
  add("mul", [&](Tape& t, Var v) { return v * t.constant(other); }, s, -2, 2);
  add("div", [&](Tape& t, Var v) { return t.constant(other) / v; }, s, 0.5, 2);
  add("affine", [](Tape&, Var v) { return v * 3.0 - 1.0; }, s, -2, 2);
  add("pow2", [](Tape&, Var v) { return pow2(v); }, s, -2, 2);
  add("sqrt", [](Tape&, Var v) { return dhog::sqrt(v); }, s, 0.5, 2);
  add("abs", [](Tape&, Var v) { return dhog::abs(v); }, s, -2, 2);
  add("smooth_abs", [](Tape&, Var v) { return smooth_abs(v, 0.3); }, s, -2, 2);
  add("clip", [](Tape&, Var v) { return clip(v, -1.0, 1.0); }, s, -2, 2);
  add("wrap", [](Tape&, Var v) { return wrap(v * 100.0, 180.0); }, s, -2, 2);
  add("atan2", [&](Tape& t, Var v) { return atan2(v, t.constant(other)); }, s, -2, 2);
  add("conv2d_same", [](Tape&, Var v) { return conv2d_same(v, Kernel(2, 3, {1, -2, 3, 0.5, 4, -1})); }, s, -2, 2);
  add("subsample", [rows, cols](Tape&, Var v) { return subsample(v, rows, cols); }, Shape{4, 3}, -2, 2);
  add("conv2d_subsample", [rows, cols](Tape&, Var v) {
    return conv2d_subsample(v, make_spatial_kernel(2), rows, cols);
  }, Shape{4, 3}, -2, 2);
  add("resize_bilinear", [](Tape&, Var v) { return resize_bilinear(v, 17, 23); }, Shape{17, 23}, -2, 2);
  add("warp_bilinear", [](Tape& t, Var v) {
    return warp_bilinear(v, {t.scalar_constant(0.3), t.scalar_constant(-0.7), t.scalar_constant(17.0),
                             t.scalar_constant(0.1)}, 10, 10);
  }, s, -2, 2);
  add("channel", [](Tape&, Var v) { return channel(v, 1); }, s, -2, 2, Shape{10, 10, 3});
  add("stack", [&](Tape& t, Var v) {
    std::vector<Var> planes{v, t.constant(other), pow2(v)};
    return stack(planes);
  }, Shape{10, 10, 3}, -2, 2);
  add("concat", [](Tape&, Var v) {
    std::vector<Var> parts{v, sum(v), pow2(v)};
    return concat(parts);
  }, Shape{201}, -2, 2);
  add("sum", [](Tape&, Var v) { return sum(pow2(v)); }, Shape::scalar(), -2, 2);
  add("dot", [&](Tape& t, Var v) { return dot(v, t.constant(other)); }, Shape::scalar(), -2, 2);
  add("l2norm", [](Tape&, Var v) { return l2norm(v); }, Shape::scalar(), -2, 2);

  // Pose scalars of the warp, one at a time.
  const Tensor img = uniform(Shape{16, 16}, 12, 0.0, 1.0);
  const char* names[4] = {"warp_bilinear tx", "warp_bilinear ty", "warp_bilinear r", "warp_bilinear sigma"};
  for (int p = 0; p < 4; ++p) {
    run.add(names[p], 1e-6, 0, 2, [=](std::uint64_t seed) {
      const Tensor base = uniform(Shape{4}, seed, -1.0, 1.0);
      const double at[4] = {base[0], base[1], 40.0 * base[2], 0.1 * base[3]};
      const Tensor w = uniform(Shape{14, 15}, seed + 1, -1.0, 1.0);
      ObjectiveBuilder f = [=](Tape& t, Var x) {
        std::vector<Var> q;
        for (int k = 0; k < 4; ++k) q.push_back(k == p ? x : t.scalar_constant(at[k]));
        return dot(warp_bilinear(t.constant(img), {q[0], q[1], q[2], q[3]}, 14, 15), t.constant(w));
      };
      return std::make_pair(f, Tensor::scalar(at[p]));
    });
  }
  return run.take();
}

std::vector<GradcheckLine> hog(const GradcheckSuiteOptions& o) {
  Runner run("hog", o);
  const Shape s{o.size, o.size};
  for (const HogConfig& cfg : {HogConfig::dalal(), HogConfig::signed_orientation()}) {
    const std::string name = cfg.orientation == Orientation::kSigned ? "signed" : "unsigned";
    run.add(name, 3e-5, 64, 0, [=](std::uint64_t seed) {
      const Shape out{o.size / cfg.cell, o.size / cfg.cell, cfg.bins};
      return std::make_pair(probe([cfg](Tape&, Var x) { return hog_forward(x, cfg); }, out, seed),
                            uniform(s, seed, 0.0, 1.0));
    });
  }
  return run.take();
}

std::vector<GradcheckLine> objective(const GradcheckSuiteOptions& o) {
  Runner run("objective", o);
  const Shape s{o.size, o.size};
  for (const HogConfig& cfg : {HogConfig::dalal(), HogConfig::signed_orientation()}) {
    const std::string name = cfg.orientation == Orientation::kSigned ? "signed" : "unsigned";
    run.add(name, 3e-5, 64, 0, [=](std::uint64_t seed) {
      const HogDescriptor t = compute_hog(Image::from_tensor(uniform(s, seed + 1, 0.0, 1.0)), cfg);
      ObjectiveBuilder f = [t, cfg](Tape&, Var x) { return dhog::objective(x, t, cfg, 0.05); };
      return std::make_pair(f, uniform(s, seed, 0.0, 1.0));
    });
  }
  return run.take();
}

std::vector<GradcheckLine> pose(const GradcheckSuiteOptions& o) {
  Runner run("pose", o);
  // Smooth synthetic template: a coarse random grid upsampled.
  const Index extent = o.size + o.size / 2;
  const Image tmpl = resize_image(Image::from_tensor(uniform(Shape{12, 12}, 5, 0.0, 1.0)), extent, extent);
  const Image patch = warp_image(tmpl, {1.5, -1.0, 12.0, 0.05}, o.size, o.size);
  const AlignmentProblem problem = make_alignment_problem(tmpl, patch, default_alignment_config(), 1);
  const char* names[4] = {"tx", "ty", "r", "sigma"};
  for (int p = 0; p < 4; ++p) {
    run.add(names[p], 1e-6, 0, 2, [=](std::uint64_t seed) {
      const Tensor base = uniform(Shape{4}, seed, -1.0, 1.0);
      const double at[4] = {2.0 * base[0], 2.0 * base[1], 180.0 * base[2], 0.1 * base[3]};
      ObjectiveBuilder f = [=](Tape& t, Var x) {
        std::vector<Var> q;
        for (int k = 0; k < 4; ++k) q.push_back(k == p ? x : t.scalar_constant(at[k]));
        return similarity({q[0], q[1], q[2], q[3]}, problem);
      };
      return std::make_pair(f, Tensor::scalar(at[p]));
    });
  }
  return run.take();
}

}  // namespace

std::vector<GradcheckLine> run_gradchecks(GradcheckTarget what, const GradcheckSuiteOptions& options) {
  if (options.size < 16 || options.size % 8 != 0) throw ConfigError("gradcheck size must be a multiple of 8, >= 16");
  switch (what) {
    case GradcheckTarget::kPrimitives: return primitives(options);
    case GradcheckTarget::kHog: return hog(options);
    case GradcheckTarget::kObjective: return objective(options);
    case GradcheckTarget::kPose: return pose(options);
  }
  throw ConfigError("unknown gradcheck target");
}

}  // namespace dhog
