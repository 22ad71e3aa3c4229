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
#include "dhog/io.hpp"
#include "dhog/metrics.hpp"
#include "json.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

using namespace dhog;
using dhog::test::data_path;

namespace {

Image noisy(const Image& base, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  Image out = base;
  for (Index i = 0; i < out.data.size(); ++i) out.data[i] = std::clamp(out.data[i] + dist(rng), 0.0, 1.0);
  return out;
}

// Entropy of the 32-bin marginal histogram, counted independently.
double entropy32(const Image& img) {
  std::map<int, double> counts;
  for (Index i = 0; i < img.data.size(); ++i) counts[std::min(31, static_cast<int>(img.data[i] * 32.0))] += 1.0;
  double h = 0.0;
  for (const auto& [bin, c] : counts) {
    const double p = c / static_cast<double>(img.data.size());
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

TEST_CASE("metrics agree with numpy and scikit-image") {
  std::ifstream in(data_path("metrics/golden.json"));
  REQUIRE(in);
  const nlohmann::json golden = nlohmann::json::parse(in);
  REQUIRE(golden.size() == 4);
  for (const auto& g : golden) {
    const Image a = load_image(data_path("metrics/" + g["a"].get<std::string>() + ".pgm"));
    const Image b = load_image(data_path("metrics/" + g["b"].get<std::string>() + ".pgm"));
    CAPTURE(g.dump());
    CHECK(cross_correlation(a, b) == doctest::Approx(g["pearson"].get<double>()).epsilon(1e-12));
    CHECK(raw_cross_correlation(a, b) == doctest::Approx(g["raw"].get<double>()).epsilon(1e-12));
    CHECK(mutual_information(a, b) == doctest::Approx(g["mi"].get<double>()).epsilon(1e-12));
    CHECK(std::abs(ssim(a, b) - g["ssim"].get<double>()) < 1e-9);
  }
}

TEST_CASE("cross-correlation") {
  const Image img = load_image(data_path("suite/05_moon.pgm"));
  CHECK(cross_correlation(img, img) == doctest::Approx(1.0).epsilon(1e-14));

  Image inverse = img;
  inverse.data = 1.0 - img.data;
  CHECK(cross_correlation(img, inverse) == doctest::Approx(-1.0).epsilon(1e-14));

  // Keep the shifted copy away from the clip bounds.
  Image squeezed = img;
  squeezed.data = 0.1 + 0.7 * img.data;
  Image shifted = squeezed;
  shifted.data += 0.1;
  CHECK(cross_correlation(squeezed, shifted) == doctest::Approx(1.0).epsilon(1e-14));

  const Image flat(8, 8, 1, 0.3), flat2(8, 8, 1, 0.7);
  CHECK(cross_correlation(flat, flat2) == 1.0);
  CHECK(cross_correlation(flat, noisy(flat, 0.2, 1)) == 0.0);
  CHECK(raw_cross_correlation(Image(8, 8, 1, 0.0), Image(8, 8, 1, 0.0)) == 1.0);
  CHECK(raw_cross_correlation(Image(8, 8, 1, 0.0), flat) == 0.0);

  CHECK_THROWS_AS(cross_correlation(Image(8, 8, 1), Image(8, 9, 1)), ShapeError);
}

TEST_CASE("mutual information") {
  const Image img = load_image(data_path("suite/00_astronaut.pgm"));
  CHECK(mutual_information(img, img) == doctest::Approx(entropy32(img)).epsilon(1e-12));
  CHECK(mutual_information(img, Image(img.width, img.height, 1, 0.4)) == 0.0);
  const Image other = noisy(img, 0.3, 4);
  CHECK(mutual_information(img, other) == mutual_information(other, img));
  CHECK(mutual_information(img, other) > 0.0);
  CHECK(mutual_information(img, other) < mutual_information(img, img));
  CHECK_THROWS_AS(mutual_information(img, Image(3, 3, 1)), ShapeError);
  CHECK_THROWS_AS(mutual_information(img, img, 1), ConfigError);
}

TEST_CASE("ssim") {
  const Image img = load_image(data_path("suite/01_camera.pgm"));
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(Image(16, 16, 1, 0.5), Image(16, 16, 1, 0.5)) == doctest::Approx(1.0).epsilon(1e-12));

  double previous = 1.0;
  for (double amp : {0.01, 0.05, 0.1}) {
    const double s = ssim(img, noisy(img, amp, 9));
    CAPTURE(amp);
    CHECK(s < previous);
    previous = s;
  }
  const Image n = noisy(img, 0.1, 3);
  CHECK(ssim(img, n) == doctest::Approx(ssim(n, img)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim(Image(10, 40, 1), Image(10, 40, 1)), ShapeError);
}

TEST_CASE("color inputs are compared in gray") {
  Image rgb(12, 12, 3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < rgb.data.size(); ++i) rgb.data[i] = dist(rng);
  const Image gray = to_gray(rgb);
  const MetricReport r = compare_images(rgb, gray);
  CHECK(r.cross_correlation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-12));
}
