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
#include "dhog/hog.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numeric>

using namespace dhog;
using dhog::test::random_tensor;

namespace {

Image random_image(Index w, Index h, std::uint64_t seed, Index channels = 1) {
  return Image::from_tensor(channels == 1 ? random_tensor(Shape{h, w}, seed, 0.0, 1.0)
                                          : random_tensor(Shape{h, w, channels}, seed, 0.0, 1.0));
}

HogConfig unnormalized(HogConfig c) {
  c.normalize = false;
  return c;
}

// Orientation weights of one pixel with the given angle.
std::vector<double> orientation_weights(double theta, const HogConfig& cfg) {
  Tape tape;
  Var mag = tape.constant(Tensor(Shape{1, 1}, 1.0));
  Var th = tape.constant(Tensor(Shape{1, 1}, theta));
  std::vector<double> w;
  for (Var p : orientation_filters(mag, th, cfg)) w.push_back(p.item());
  return w;
}

}  // namespace

TEST_CASE("to_gray uses the luma weights") {
  auto gray_of = [](double r, double g, double b) {
    Tape tape;
    Tensor t(Shape{1, 1, 3});
    t[0] = r;
    t[1] = g;
    t[2] = b;
    return to_gray(tape.constant(t)).item();
  };
  CHECK(gray_of(1, 0, 0) == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(gray_of(0, 0, 0) == 0.0);
  CHECK(gray_of(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-15));

  Tape tape;
  CHECK_THROWS_AS(to_gray(tape.constant(Tensor(Shape{2, 2, 2}))), ShapeError);
  const Image rgb = random_image(4, 3, 1, 3);
  const Image g = to_gray(rgb);
  CHECK(g.channels == 1);
  CHECK(g.at(1, 2) == doctest::Approx(0.299 * rgb.at(1, 2, 0) + 0.587 * rgb.at(1, 2, 1) + 0.114 * rgb.at(1, 2, 2)));
}

TEST_CASE("gradients") {
  const HogConfig cfg;
  SUBCASE("constant image") {
    Tape tape;
    const GradientField g = gradients(tape.constant(Tensor(Shape{8, 8}, 0.4)), cfg);
    for (Index y = 1; y < 7; ++y)
      for (Index x = 1; x < 7; ++x) {
        CHECK(g.magnitude.value()(y, x) <= 1e-12);
        CHECK(g.orientation.value()(y, x) == 0.0);
      }
    // Zero padding: the outer pixels see the step down to 0.
    CHECK(g.magnitude.value()(3, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(g.magnitude.value()(3, 7) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(g.orientation.value()(3, 7) == doctest::Approx(0.0));
    CHECK(g.orientation.value()(0, 3) == doctest::Approx(90.0));
  }
  SUBCASE("horizontal ramp") {
    const Index w = 16;
    Tensor ramp(Shape{8, w});
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < w; ++x) ramp(y, x) = static_cast<double>(x) / w;
    Tape tape;
    const GradientField g = gradients(tape.constant(ramp), cfg);
    for (Index x = 1; x < w - 1; ++x) {
      CHECK(g.magnitude.value()(4, x) == doctest::Approx(2.0 / w).epsilon(1e-12));
      CHECK(g.orientation.value()(4, x) == 0.0);
    }
  }
  SUBCASE("vertical ramp") {
    Tensor ramp(Shape{16, 8});
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 8; ++x) ramp(y, x) = static_cast<double>(y) / 16;
    Tape tape;
    const GradientField g = gradients(tape.constant(ramp), cfg);
    for (Index y = 1; y < 15; ++y) CHECK(g.orientation.value()(y, 3) == doctest::Approx(90.0));
  }
  SUBCASE("too small") {
    Tape tape;
    CHECK_THROWS_AS(gradients(tape.constant(Tensor(Shape{2, 8})), cfg), ShapeError);
  }
}

TEST_CASE("orientation filters") {
  const HogConfig cfg;
  for (int b = 0; b < cfg.bins; ++b) {
    const auto w = orientation_weights(cfg.bin_center(b), cfg);
    for (int k = 0; k < cfg.bins; ++k) CHECK(w[static_cast<std::size_t>(k)] == (k == b ? 1.0 : 0.0));
  }
  const auto w10 = orientation_weights(10.0, cfg);
  CHECK(w10[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(w10[1] == doctest::Approx(0.5).epsilon(1e-14));
  const auto w175 = orientation_weights(175.0, cfg);
  CHECK(w175[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(w175[8] == doctest::Approx(0.25).epsilon(1e-14));

  const auto s = orientation_weights(355.0, HogConfig::signed_orientation());
  CHECK(s[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(s[17] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("orientation weights form a partition of unity") {
  for (const HogConfig& cfg : {HogConfig::dalal(), HogConfig::signed_orientation()}) {
    const auto steps = static_cast<Index>(std::lround(cfg.range() * 10));
    Tensor theta(Shape{1, steps});
    for (Index i = 0; i < steps; ++i) theta[i] = 0.1 * static_cast<double>(i);
    Tape tape;
    const auto planes = orientation_filters(tape.constant(Tensor(Shape{1, steps}, 1.0)), tape.constant(theta), cfg);
    double worst = 0.0;
    for (Index i = 0; i < steps; ++i) {
      double s = 0.0;
      for (Var p : planes) s += p.value()[i];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("spatial kernel") {
  const Kernel k2 = make_spatial_kernel(2);
  const std::vector<double> expected{0.25, 0.75, 0.75, 0.25};
  CHECK(k2.row_factor() == expected);
  for (int c = 2; c <= 16; c += 2) {
    const Kernel k = make_spatial_kernel(c);
    const auto& t = k.row_factor();
    CHECK(std::accumulate(t.begin(), t.end(), 0.0) == doctest::Approx(c).epsilon(1e-14));
    CHECK(k.sum() == doctest::Approx(c * c).epsilon(1e-14));
    const double peak = (1.0 - 1.0 / (2.0 * c)) * (1.0 - 1.0 / (2.0 * c));
    CHECK(k(c - 1, c - 1) == doctest::Approx(peak));
  }
  CHECK(make_spatial_kernel(8).sum() == doctest::Approx(64.0));
  CHECK_THROWS_AS(make_spatial_kernel(3), ConfigError);
  CHECK_THROWS_AS(make_spatial_kernel(0), ConfigError);
}

TEST_CASE("spatial binning") {
  const HogConfig cfg;
  SUBCASE("constant plane") {
    Tape tape;
    std::vector<Var> planes{tape.constant(Tensor(Shape{32, 32}, 1.0))};
    const Tensor v = spatial_binning(planes, cfg).value();
    CHECK(v.shape() == Shape{4, 4, 1});
    for (Index i = 1; i < 3; ++i)
      for (Index j = 1; j < 3; ++j) CHECK(v(i, j, 0) == doctest::Approx(64.0).epsilon(1e-14));
  }
  SUBCASE("impulse votes sum to its magnitude") {
    for (Index y = 4; y < 28; y += 3) {
      for (Index x = 4; x < 28; x += 5) {
        Tensor p(Shape{32, 32});
        p(y, x) = 2.5;
        Tape tape;
        std::vector<Var> planes{tape.constant(p)};
        const Tensor v = spatial_binning(planes, cfg).value();
        CHECK(v.array().sum() == doctest::Approx(2.5).epsilon(1e-14));
        // At most the four nearest cells receive votes.
        CHECK((v.array() > 0.0).count() <= 4);
      }
    }
  }
  SUBCASE("impulse at a cell center") {
    Tensor p(Shape{32, 32});
    p(12, 12) = 1.0;  // pixel centers 12.5; cell 1 spans [8, 16) with center 12
    Tape tape;
    std::vector<Var> planes{tape.constant(p)};
    const Tensor v = spatial_binning(planes, cfg).value();
    const double near = 1.0 - 0.5 / 8.0;
    CHECK(v(1, 1, 0) == doctest::Approx(near * near));
    CHECK(v(1, 2, 0) == doctest::Approx(near * (1.0 - near)));
  }
  SUBCASE("zero plane") {
    Tape tape;
    std::vector<Var> planes{tape.constant(Tensor(Shape{16, 16}))};
    CHECK(spatial_binning(planes, cfg).value().array().abs().maxCoeff() == 0.0);
  }
  SUBCASE("extent not divisible") {
    Tape tape;
    std::vector<Var> planes{tape.constant(Tensor(Shape{20, 16}))};
    CHECK_THROWS_AS(spatial_binning(planes, cfg), ConfigError);
  }
}

TEST_CASE("spatial vote weights sum to one at every interior pixel") {
  for (int c : {4, 8}) {
    HogConfig cfg;
    cfg.cell = c;
    const Index n = 8 * c;
    Tape tape;
    Var plane = tape.variable(Tensor(Shape{n, n}));
    std::vector<Var> planes{plane};
    Var v = spatial_binning(planes, cfg);
    // Adjoint of sum(v) at a pixel is that pixel's total vote weight.
    tape.backward(sum(v));
    const Tensor w = tape.grad(plane);
    double worst = 0.0;
    for (Index y = c / 2; y < n - c / 2; ++y)
      for (Index x = c / 2; x < n - c / 2; ++x) worst = std::max(worst, std::abs(w(y, x) - 1.0));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("normalize") {
  HogConfig cfg;
  Tape tape;
  CHECK(normalize(tape.constant(Tensor(Shape{2, 2, 9})), cfg).value().array().abs().maxCoeff() == 0.0);

  const Tensor v = random_tensor(Shape{3, 3, 9}, 5, 0.0, 2.0);
  const double n = std::sqrt(v.array().square().sum());
  const Tensor out = normalize(tape.constant(v), cfg).value();
  CHECK(std::sqrt(out.array().square().sum()) == doctest::Approx(n / std::sqrt(n + cfg.epsilon)).epsilon(1e-13));

  cfg.epsilon = 1e-300;
  Tensor unit = v;
  unit.array() /= n;
  CHECK(std::sqrt(normalize(tape.constant(unit), cfg).value().array().square().sum()) ==
        doctest::Approx(1.0).epsilon(1e-13));

  HogConfig sq;
  sq.norm_style = NormStyle::kSquared;
  const Tensor o2 = normalize(tape.constant(v), sq).value();
  CHECK(std::sqrt(o2.array().square().sum()) == doctest::Approx(n / std::sqrt(n * n + sq.epsilon)).epsilon(1e-13));
}

TEST_CASE("hog_forward shapes and trivial inputs") {
  const HogDescriptor d = compute_hog(random_image(128, 128, 1), HogConfig::dalal());
  CHECK(d.grid.shape() == Shape{16, 16, 9});
  CHECK(d.grid.size() == 2304);

  // A constant image only has the edge against the zero border; every cell
  // whose tent misses the outermost pixels stays empty.
  const HogDescriptor z = compute_hog(Image(64, 64, 1, 0.3), HogConfig::dalal());
  double interior = 0.0, border = 0.0;
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j)
      for (Index b = 0; b < 9; ++b) {
        const bool edge = i == 0 || j == 0 || i == 7 || j == 7;
        (edge ? border : interior) = std::max(edge ? border : interior, std::abs(z.grid(i, j, b)));
      }
  CHECK(interior < 1e-9);
  CHECK(border > 0.1);
  const HogDescriptor black = compute_hog(Image(64, 64, 1, 0.0), HogConfig::dalal());
  CHECK(black.grid.array().abs().maxCoeff() < 1e-7);  // only the magnitude guard remains

  const HogDescriptor u = compute_hog(random_image(32, 24, 2), unnormalized(HogConfig::dalal()));
  CHECK(u.grid.array().minCoeff() >= 0.0);

  CHECK_THROWS_AS(compute_hog(random_image(30, 32, 3), HogConfig::dalal()), ConfigError);
  HogConfig odd;
  odd.cell = 5;
  CHECK_THROWS_AS(compute_hog(random_image(40, 40, 3), odd), ConfigError);
}

TEST_CASE("hog_forward matches the per-pixel reference") {
  std::uint64_t seed = 100;
  for (HogConfig cfg : {HogConfig::dalal(), HogConfig::signed_orientation()}) {
    for (int c : {4, 8}) {
      cfg.cell = c;
      for (int rep = 0; rep < 3; ++rep) {
        const Image img = random_image(8 * c, 6 * c, seed++, rep == 2 ? 3 : 1);
        const Tensor a = compute_hog(img, cfg).grid;
        const Tensor b = hog_reference(img, cfg).grid;
        CHECK((a.array() - b.array()).abs().maxCoeff() < 1e-10);
        const Tensor ua = compute_hog(img, unnormalized(cfg)).grid;
        const Tensor ub = hog_reference(img, unnormalized(cfg)).grid;
        CHECK((ua.array() - ub.array()).abs().maxCoeff() < 1e-10);
      }
    }
  }
}

TEST_CASE("shifting by one cell shifts interior cells by one index") {
  const int c = 8;
  const Index w = 64, h = 48;
  const Image img = random_image(w, h, 7);
  Image shifted = img;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) shifted.at(y, x) = x + c < w ? img.at(y, x + c) : 0.5;
  const HogConfig cfg = unnormalized(HogConfig::dalal());
  const Tensor a = hog_reference(img, cfg).grid;
  const Tensor b = hog_reference(shifted, cfg).grid;
  const Tensor fa = compute_hog(shifted, cfg).grid;
  for (Index i = 0; i < h / c; ++i)
    for (Index j = 1; j <= 5; ++j)
      for (Index k = 0; k < 9; ++k) {
        CHECK(b(i, j, k) == doctest::Approx(a(i, j + 1, k)).epsilon(1e-12));
        CHECK(fa(i, j, k) == doctest::Approx(a(i, j + 1, k)).epsilon(1e-10));
      }
}

TEST_CASE("unnormalized descriptor scales with intensity") {
  Image img = random_image(32, 32, 8);
  img.data = 0.5 + 0.2 * (img.data - 0.5);
  Image scaled = img;
  scaled.data *= 1.6;
  const HogConfig cfg = unnormalized(HogConfig::dalal());
  const Tensor a = hog_reference(img, cfg).grid;
  const Tensor b = hog_reference(scaled, cfg).grid;
  CHECK(((b.array() - 1.6 * a.array()).abs().maxCoeff()) < 1e-9);
}

TEST_CASE("gradient of the descriptor distance passes gradcheck") {
  for (HogConfig cfg : {HogConfig::dalal(), HogConfig::signed_orientation()}) {
    const Tensor target = compute_hog(random_image(64, 64, 40), cfg).grid;
    ObjectiveBuilder f = [&](Tape& t, Var x) { return l2norm(hog_forward(x, cfg) - t.constant(target)); };
    GradcheckOptions opts;
    opts.seed = 3;
    const GradcheckReport r = gradcheck(f, random_tensor(Shape{64, 64}, 41, 0.0, 1.0), opts);
    CAPTURE(r.excluded);
    CHECK(r.checked >= 60);
    CHECK(r.max_relative_error < 1e-4);
  }
}
