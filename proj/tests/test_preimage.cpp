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


#include "doctest.h"

#include "dhog/error.hpp"
#include "dhog/gradcheck.hpp"
#include "dhog/io.hpp"
#include "dhog/preimage.hpp"
#include "test_util.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <random>

using namespace dhog;
using dhog::test::data_path;
using dhog::test::random_tensor;
using dhog::test::ScratchDir;

namespace {

Image suite_image(const char* name) { return load_image(data_path(std::string("suite/") + name + ".pgm")); }

Image crop(const Image& img, Index size) {
  Image out(size, size, 1);
  const Index y0 = (img.height - size) / 2, x0 = (img.width - size) / 2;
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) out.at(y, x) = img.at(y + y0, x + x0);
  return out;
}

double pixel_std(const Image& img) {
  const double m = img.data.mean();
  return std::sqrt((img.data - m).square().mean());
}

// Independent loop over horizontal and vertical neighbor pairs.
double smoothness_oracle(const Image& img) {
  double s = 0.0;
  auto term = [](double a, double b) { return std::sqrt((a - b) * (a - b) + kSmoothnessDelta * kSmoothnessDelta); };
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x) {
      if (x + 1 < img.width) s += term(img.at(y, x), img.at(y, x + 1));
      if (y + 1 < img.height) s += term(img.at(y, x), img.at(y + 1, x));
    }
  return s;
}

double evaluate(const Image& img, const HogDescriptor& target, double xi, HogConfig cfg = {}) {
  Tape tape;
  return objective(tape.constant(img.to_tensor()), target, cfg, xi).item();
}

}  // namespace

TEST_CASE("smoothness term") {
  const Image img = Image::from_tensor(random_tensor(Shape{9, 13}, 3, 0.0, 1.0));
  Tape tape;
  CHECK(smoothness(tape.constant(img.to_tensor())).item() == doctest::Approx(smoothness_oracle(img)).epsilon(1e-13));
  const Image flat(6, 5, 1, 0.25);
  const double pairs = 5 * 5 + 4 * 6;
  CHECK(smoothness(tape.constant(flat.to_tensor())).item() == doctest::Approx(pairs * kSmoothnessDelta));
}

TEST_CASE("objective examples") {
  const HogConfig cfg;
  SUBCASE("estimate equals a constant source") {
    const Image flat(32, 32, 1, 0.6);
    const HogDescriptor t = compute_hog(flat, cfg);
    const double e = evaluate(flat, t, 1e2);
    CHECK(e >= 0.0);
    CHECK(e <= 1e2 * smoothness_oracle(flat) * (1.0 + 1e-12));  // only the delta floor remains
    CHECK(e < 1e-3);
  }
  SUBCASE("xi = 0 at the source") {
    const Image img = crop(suite_image("02_chelsea"), 64);
    CHECK(evaluate(img, compute_hog(img, cfg), 0.0) == 0.0);
  }
  SUBCASE("black estimate against a textured target gives the target norm") {
    const Image img = crop(suite_image("02_chelsea"), 64);
    const HogDescriptor t = compute_hog(img, cfg);
    const double norm = std::sqrt(t.grid.array().square().sum());
    CHECK(evaluate(Image(64, 64, 1, 0.0), t, 0.0) == doctest::Approx(norm).epsilon(1e-6));
  }
  SUBCASE("terms add up") {
    const Image img = crop(suite_image("03_coffee"), 32);
    const HogDescriptor t = compute_hog(crop(suite_image("04_coins"), 32), cfg);
    Tape tape;
    const ObjectiveTerms terms = objective_terms(tape.constant(img.to_tensor()), t, cfg, 0.3);
    CHECK(terms.total.item() == doctest::Approx(terms.feature.item() + 0.3 * terms.smoothness.item()).epsilon(1e-14));
    CHECK(terms.smoothness.item() == doctest::Approx(smoothness_oracle(img)).epsilon(1e-12));
  }
  SUBCASE("mismatched target") {
    const HogDescriptor t = compute_hog(Image(32, 32, 1, 0.1), cfg);
    Tape tape;
    CHECK_THROWS_AS(objective(tape.constant(Tensor(Shape{40, 32})), t, cfg, 1.0), ShapeError);
    CHECK_THROWS_AS(objective(tape.constant(Tensor(Shape{32, 32})), t, cfg, -1.0), ConfigError);
    CHECK_THROWS_AS(objective(tape.constant(Tensor(Shape{32, 32})), t, HogConfig::signed_orientation(), 1.0),
                    ConfigError);
  }
}

TEST_CASE("objective gradient passes gradcheck at 64x64") {
  for (std::uint64_t seed : {1, 2}) {
    const HogConfig cfg = seed == 1 ? HogConfig::dalal() : HogConfig::signed_orientation();
    const HogDescriptor t = compute_hog(Image::from_tensor(random_tensor(Shape{64, 64}, 70 + seed, 0.0, 1.0)), cfg);
    ObjectiveBuilder f = [&](Tape&, Var x) { return objective(x, t, cfg, 0.05); };
    GradcheckOptions opts;
    opts.seed = seed;
    const GradcheckReport r = gradcheck(f, random_tensor(Shape{64, 64}, 80 + seed, 0.0, 1.0), opts);
    CAPTURE(r.excluded);
    CHECK(r.checked >= 60);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("minimize") {
  const HogConfig cfg;
  const Image img = crop(suite_image("01_camera"), 64);
  const HogDescriptor t = compute_hog(img, cfg);
  OptimizerConfig opt;
  opt.max_iterations = 40;

  SUBCASE("starting at the source stops at once") {
    const Reconstruction r = minimize(img, t, cfg, 0.0, opt);
    CHECK(r.trace.size() == 1);
    CHECK(r.trace[0].energy == 0.0);
    CHECK((r.image.data == img.data).all());
  }
  SUBCASE("zero iterations return the start") {
    opt.max_iterations = 0;
    const Image start = initial_estimate(64, 64, Init::kNoise, 5);
    const Reconstruction r = minimize(start, t, cfg, 1e-2, opt);
    CHECK(r.trace.size() == 1);
    CHECK((r.image.data == start.data).all());
  }
  SUBCASE("a perturbed source descends") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.01);
    Image start = img;
    for (Index i = 0; i < start.data.size(); ++i) start.data[i] = std::clamp(start.data[i] + noise(rng), 0.0, 1.0);
    for (Method m : {Method::kMomentum, Method::kDogleg}) {
      opt.method = m;
      opt.max_iterations = m == Method::kDogleg ? 8 : 40;
      const Reconstruction r = minimize(start, t, cfg, 1e-3, opt);
      CHECK(r.trace.back().energy < r.trace.front().energy);
      double best = r.trace.front().energy;
      for (const TraceRow& row : r.trace) {
        if (m == Method::kDogleg) CHECK(row.energy <= best);  // accepted steps only
        best = std::min(best, row.energy);
      }
      CHECK(r.image.data.minCoeff() >= 0.0);
      CHECK(r.image.data.maxCoeff() <= 1.0);
    }
  }
  SUBCASE("best-so-far is returned") {
    opt.step = 0.1;
    const Reconstruction r = minimize(initial_estimate(64, 64, Init::kNoise, 1), t, cfg, 1e-2, opt);
    double best = r.trace.front().energy;
    for (const TraceRow& row : r.trace) best = std::min(best, row.energy);
    CHECK(evaluate(r.image, t, 1e-2) == doctest::Approx(best).epsilon(1e-12));
  }
  SUBCASE("divergence aborts") {
    // A near-perfect start makes the initial energy tiny; a wild step blows past 1e6 times it.
    Image start = img;
    start.data[100] += 1e-9;
    opt.step = 1e6;
    opt.energy_floor = 0.0;
    CHECK_THROWS_AS(minimize(start, t, cfg, 0.0, opt), DivergenceError);
  }
  SUBCASE("bad settings") {
    opt.momentum = 1.0;
    CHECK_THROWS_AS(minimize(img, t, cfg, 0.0, opt), ConfigError);
    opt.momentum = 0.9;
    CHECK_THROWS_AS(minimize(Image(32, 32, 1), t, cfg, 0.0, opt), ShapeError);
  }
}

TEST_CASE("a constant target drives a flat reconstruction") {
  const HogConfig cfg;
  const Image flat(64, 64, 1, 0.3);
  ReconstructionProblem p;
  p.xi = 1e2;
  p.init = Init::kNoise;
  p.seed = 4;
  p.targets[1] = compute_hog(flat, cfg);
  OptimizerConfig opt;
  opt.step = 1e-5;
  opt.max_iterations = 150;
  for (Schedule s : {Schedule::kSingle, Schedule::kMultiScale, Schedule::kMultiScaleMore}) {
    p.schedule = s;
    if (s == Schedule::kMultiScaleMore) p.targets = multiscale_targets(flat, cfg);
    const Reconstruction r = reconstruct(p, opt);
    CAPTURE(static_cast<int>(s));
    CHECK(pixel_std(r.image) < 0.01);
  }
}

TEST_CASE("multi-scale stage ladder") {
  const HogConfig cfg;
  ReconstructionProblem p;
  p.targets[1] = compute_hog(crop(suite_image("05_moon"), 128), cfg);
  p.xi = 1e-2;
  p.init = Init::kNoise;
  p.schedule = Schedule::kMultiScale;
  OptimizerConfig opt;
  opt.max_iterations = 2;
  const Reconstruction r = reconstruct(p, opt);
  std::vector<int> stages;
  for (const TraceRow& row : r.trace)
    if (stages.empty() || stages.back() != row.stage) stages.push_back(row.stage);
  // The s = 64 stage would need a cell of 1 pixel.
  CHECK(stages == std::vector<int>{16, 4, 1});
  CHECK(r.image.width == 128);
  CHECK(r.image.height == 128);

  HogDescriptor c4 = compute_hog(crop(suite_image("05_moon"), 64), [] {
    HogConfig c;
    c.cell = 4;
    return c;
  }());
  p.targets[1] = c4;
  stages.clear();
  for (const TraceRow& row : reconstruct(p, opt).trace)
    if (stages.empty() || stages.back() != row.stage) stages.push_back(row.stage);
  CHECK(stages == std::vector<int>{4, 1});
}

TEST_CASE("multi-scale-more") {
  const HogConfig cfg;
  const Image img = suite_image("06_text");
  CHECK(multiscale_more_stages(128, 128, 8) == std::vector<int>{64, 16, 4, 1});
  CHECK(multiscale_more_stages(64, 64, 8) == std::vector<int>{64, 16, 4, 1});
  CHECK(multiscale_more_stages(48, 48, 8) == std::vector<int>{4, 1});
  const std::map<int, HogDescriptor> targets = multiscale_targets(img, cfg);
  REQUIRE(targets.size() == 4);
  CHECK(targets.at(64).grid.shape() == Shape{2, 2, 9});
  CHECK(targets.at(16).grid.shape() == Shape{4, 4, 9});

  // Each stage's target is reproduced by the downsampled original itself.
  for (const auto& [s, t] : targets) {
    const Index root = static_cast<Index>(std::lround(std::sqrt(s)));
    CHECK(evaluate(downsample_box(img, root), t, 0.0) == 0.0);
  }

  ReconstructionProblem p;
  p.targets = targets;
  p.schedule = Schedule::kMultiScaleMore;
  p.xi = 1e-2;
  p.init = Init::kNoise;
  OptimizerConfig opt;
  opt.max_iterations = 2;
  const Reconstruction r = reconstruct(p, opt);
  CHECK(r.trace.front().stage == 64);
  CHECK(r.trace.back().stage == 1);
  CHECK(r.image.width == 128);

  p.targets.erase(16);
  CHECK_THROWS_AS(reconstruct(p, opt), ConfigError);
}

TEST_CASE("reconstruction is deterministic") {
  ReconstructionProblem p;
  p.targets[1] = compute_hog(crop(suite_image("13_retina"), 64), HogConfig());
  p.xi = 1e-2;
  p.init = Init::kNoise;
  p.seed = 9;
  OptimizerConfig opt;
  opt.max_iterations = 15;
  opt.step = 0.1;
  const Reconstruction a = reconstruct(p, opt);
  const Reconstruction b = reconstruct(p, opt);
  REQUIRE(a.image.data.size() == b.image.data.size());
  CHECK(std::memcmp(a.image.data.data(), b.image.data.data(), sizeof(double) * a.image.data.size()) == 0);
  p.seed = 10;
  CHECK_FALSE((reconstruct(p, opt).image.data == a.image.data).all());
}

TEST_CASE("initial estimates") {
  const Image g = initial_estimate(8, 6, Init::kGray, 0);
  CHECK((g.data == 0.5).all());
  const Image n = initial_estimate(8, 6, Init::kNoise, 3);
  CHECK(n.data.minCoeff() >= 0.4);
  CHECK(n.data.maxCoeff() <= 0.6);
  CHECK((initial_estimate(8, 6, Init::kNoise, 3).data == n.data).all());
}

TEST_CASE("trace CSV") {
  ScratchDir dir;
  write_trace_csv({{0, 16, 2.5, 1.5, 100.0}, {1, 16, 2.0, 1.25, 75.0}}, dir / "t.csv");
  const std::vector<std::uint8_t> b = read_file(dir / "t.csv");
  CHECK(std::string(b.begin(), b.end()) == "iteration,stage,E,feature,smoothness\n0,16,2.5,1.5,100\n1,16,2,1.25,75\n");
}
