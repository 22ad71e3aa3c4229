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

#include "dhog/align.hpp"
#include "dhog/io.hpp"
#include "dhog/preimage.hpp"
#include "test_util.hpp"

#include "json.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace dhog;
using dhog::test::data_path;
using dhog::test::ScratchDir;
namespace fs = std::filesystem;

namespace {

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run(const std::string& args, const fs::path& out = "/dev/null", const fs::path& err = "/dev/null",
        const char* binary = DHOG_CLI) {
  const std::string cmd = quote(binary) + " " + args + " >" + quote(out) + " 2>" + quote(err);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  const std::vector<std::uint8_t> b = read_file(p);
  return std::string(b.begin(), b.end());
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::string suite(const char* name) { return data_path(std::string("suite/") + name + ".pgm"); }

double entropy32(const Image& img) {
  std::vector<double> h(32, 0.0);
  for (Index i = 0; i < img.data.size(); ++i) h[std::min<std::size_t>(31, static_cast<std::size_t>(img.data[i] * 32))] += 1;
  double e = 0.0;
  for (double c : h)
    if (c > 0) e -= c / img.data.size() * std::log2(c / img.data.size());
  return e;
}

double pixel_std(const Image& img) {
  const double m = img.data.mean();
  return std::sqrt((img.data - m).square().mean());
}

}  // namespace

TEST_CASE("extract") {
  ScratchDir dir;
  SUBCASE("default grid") {
    REQUIRE(run("extract --input " + quote(suite("00_astronaut")) + " --output " + quote(dir / "a.ghog")) == 0);
    const HogDescriptor d = read_descriptor(dir / "a.ghog");
    CHECK(d.grid.shape() == Shape{16, 16, 9});
    CHECK(fs::file_size(dir / "a.ghog") == kDescriptorHeaderBytes + 16 * 16 * 9 * 4);
  }
  SUBCASE("signed mode and scale") {
    REQUIRE(run("extract --mode signed --scale 4 --input " + quote(suite("00_astronaut")) + " --output " +
                quote(dir / "s.ghog")) == 0);
    const HogDescriptor d = read_descriptor(dir / "s.ghog");
    CHECK(d.grid.shape() == Shape{8, 8, 18});
    CHECK(d.config.orientation == Orientation::kSigned);
  }
  SUBCASE("indivisible input is center-cropped with a warning") {
    Image img(130, 130, 1);
    for (Index i = 0; i < img.data.size(); ++i) img.data[i] = (i * 37 % 101) / 100.0;
    save_image(img, dir / "odd.pgm");
    REQUIRE(run("extract --input " + quote(dir / "odd.pgm") + " --output " + quote(dir / "o.ghog"), "/dev/null",
                dir / "err.txt") == 0);
    CHECK(slurp(dir / "err.txt").find("warning") != std::string::npos);
    CHECK(read_descriptor(dir / "o.ghog").grid.shape() == Shape{16, 16, 9});
  }
  SUBCASE("constant images") {
    save_image(Image(64, 64, 1, 0.0), dir / "black.pgm");
    REQUIRE(run("extract --input " + quote(dir / "black.pgm") + " --output " + quote(dir / "b.ghog")) == 0);
    CHECK(read_descriptor(dir / "b.ghog").grid.array().abs().maxCoeff() < 1e-7);  // magnitude guard only
    save_image(Image(64, 64, 1, 0.6), dir / "gray.pgm");
    REQUIRE(run("extract --input " + quote(dir / "gray.pgm") + " --output " + quote(dir / "g.ghog")) == 0);
    const HogDescriptor g = read_descriptor(dir / "g.ghog");
    for (Index y = 1; y < 7; ++y)
      for (Index x = 1; x < 7; ++x)
        for (Index b = 0; b < 9; ++b) CHECK(std::abs(g.grid(y, x, b)) < 1e-7);
  }
  SUBCASE("errors") {
    CHECK(run("extract --input " + quote(dir / "missing.png") + " --output " + quote(dir / "m.ghog")) == 2);
    CHECK(run("extract --cell 7 --input " + quote(suite("00_astronaut")) + " --output " + quote(dir / "m.ghog")) ==
          3);
    CHECK(run("extract --mode sideways --input " + quote(suite("00_astronaut")) + " --output " +
              quote(dir / "m.ghog")) == 3);
    CHECK(run("extract --input " + quote(suite("00_astronaut"))) == 3);
    CHECK_FALSE(fs::exists(dir / "m.ghog"));
  }
}

TEST_CASE("invert") {
  ScratchDir dir;
  const Image moon = load_image(suite("05_moon"));
  Image crop(64, 64, 1);
  for (Index y = 0; y < 64; ++y)
    for (Index x = 0; x < 64; ++x) crop.at(y, x) = moon.at(y + 32, x + 32);
  save_image(crop, dir / "moon.pgm");
  REQUIRE(run("extract --input " + quote(dir / "moon.pgm") + " --output " + quote(dir / "moon.ghog")) == 0);

  SUBCASE("zero iterations return the initialization") {
    REQUIRE(run("invert --iters 0 --target " + quote(dir / "moon.ghog") + " --output " + quote(dir / "g.png")) == 0);
    CHECK((load_image(dir / "g.png").data == 128.0 / 255.0).all());
    REQUIRE(run("--seed 5 invert --iters 0 --init noise --target " + quote(dir / "moon.ghog") + " --output " +
                quote(dir / "n.pgm")) == 0);
    const Image expect = initial_estimate(64, 64, Init::kNoise, 5);
    CHECK((load_image(dir / "n.pgm").data - expect.data).abs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  }
  SUBCASE("constant target gives a flat image") {
    save_image(Image(64, 64, 1, 0.3), dir / "flat.pgm");
    REQUIRE(run("extract --input " + quote(dir / "flat.pgm") + " --output " + quote(dir / "flat.ghog")) == 0);
    REQUIRE(run("invert --init noise --xi 1e2 --step 1e-5 --iters 150 --target " + quote(dir / "flat.ghog") +
                " --output " + quote(dir / "f.pgm")) == 0);
    CHECK(pixel_std(load_image(dir / "f.pgm")) < 0.01);
  }
  SUBCASE("trace and determinism") {
    const std::string args = "--seed 3 invert --init noise --xi 3e-2 --step 0.1 --iters 20 --target " +
                             quote(dir / "moon.ghog");
    REQUIRE(run(args + " --output " + quote(dir / "a.png") + " --trace " + quote(dir / "a.csv")) == 0);
    REQUIRE(run(args + " --output " + quote(dir / "b.png") + " --trace " + quote(dir / "b.csv")) == 0);
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    const auto rows = csv_rows(slurp(dir / "a.csv"));
    REQUIRE(rows.size() >= 3);
    CHECK(rows.size() <= 22);  // iterations 0..20, fewer on a stall
    CHECK(rows[0] == std::vector<std::string>{"iteration", "stage", "E", "feature", "smoothness"});
    double best = std::stod(rows[1][2]);
    for (std::size_t i = 2; i < rows.size(); ++i) best = std::min(best, std::stod(rows[i][2]));
    CHECK(best < std::stod(rows[1][2]));
  }
  SUBCASE("multi-more takes one file per scale") {
    std::string targets;
    for (int s : {16, 4, 1}) {
      const std::string f = quote(dir / ("m" + std::to_string(s) + ".ghog"));
      REQUIRE(run("extract --scale " + std::to_string(s) + " --input " + quote(dir / "moon.pgm") + " --output " + f) ==
              0);
      targets += " --target " + f;
    }
    // A 64x64 image also has the s = 64 stage; without its file the run is refused.
    CHECK(run("invert --schedule multi-more --iters 2" + targets + " --output " + quote(dir / "x.png")) == 3);
    CHECK_FALSE(fs::exists(dir / "x.png"));
    REQUIRE(run("extract --scale 64 --input " + quote(dir / "moon.pgm") + " --output " + quote(dir / "m64.ghog")) ==
            0);
    targets += " --target " + quote(dir / "m64.ghog");
    REQUIRE(run("invert --schedule multi-more --iters 2" + targets + " --output " + quote(dir / "x.png") +
                " --trace " + quote(dir / "x.csv")) == 0);
    const auto rows = csv_rows(slurp(dir / "x.csv"));
    CHECK(rows[1][1] == "64");
    CHECK(rows.back()[1] == "1");
  }
  SUBCASE("errors") {
    CHECK(run("invert --target " + quote(dir / "none.ghog") + " --output " + quote(dir / "e.png")) == 2);
    CHECK(run("invert --schedule multi --target " + quote(dir / "moon.ghog") + " --target " +
              quote(dir / "moon.ghog") + " --output " + quote(dir / "e.png")) == 3);
    CHECK(run("invert --momentum 1.5 --target " + quote(dir / "moon.ghog") + " --output " + quote(dir / "e.png")) ==
          3);
    CHECK(run("invert --opt newton --target " + quote(dir / "moon.ghog") + " --output " + quote(dir / "e.png")) == 3);
    CHECK_FALSE(fs::exists(dir / "e.png"));
  }
}

TEST_CASE("align") {
  ScratchDir dir;
  const std::string tmpl = suite("00_astronaut");
  const Image t = load_image(tmpl);
  save_image(warp_image(t, {}, 64, 64), dir / "self.pgm");
  const std::string self = "align --template " + quote(tmpl) + " --target-patch " + quote(dir / "self.pgm");

  SUBCASE("self-alignment") {
    REQUIRE(run(self + " --output " + quote(dir / "p.json") + " --traces " + quote((dir / "tr").string())) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "p.json"));
    CHECK(std::abs(j["tx"].get<double>()) <= 0.5);
    CHECK(std::abs(j["ty"].get<double>()) <= 0.5);
    CHECK(std::abs(angle_difference(j["r"].get<double>(), 0.0)) <= 1.0);
    CHECK(std::abs(j["sigma"].get<double>()) <= 0.02);
    CHECK(j["restarts"].size() == 8);
    for (int k = 0; k < 8; ++k) CHECK(fs::exists(dir / ("tr" + std::to_string(k) + ".csv")));
    CHECK(csv_rows(slurp(dir / "tr0.csv"))[0] ==
          std::vector<std::string>{"iteration", "tx", "ty", "r", "sigma", "S"});
  }
  SUBCASE("threads do not change the result") {
    REQUIRE(run(self + " --restarts 4 --iters 30 --output " + quote(dir / "1.json")) == 0);
    REQUIRE(run("--threads 4 " + self + " --restarts 4 --iters 30 --output " + quote(dir / "4.json")) == 0);
    CHECK(slurp(dir / "1.json") == slurp(dir / "4.json"));
  }
  SUBCASE("r sweep peaks at zero") {
    REQUIRE(run(self + " --sweep r", dir / "sweep.csv") == 0);
    const auto rows = csv_rows(slurp(dir / "sweep.csv"));
    REQUIRE(rows.size() == 362);
    CHECK(rows[0] == std::vector<std::string>{"value", "S", "dSdparam"});
    const auto best = std::max_element(rows.begin() + 1, rows.end(), [](const auto& a, const auto& b) {
      return std::stod(a[1]) < std::stod(b[1]);
    });
    CHECK(std::stod((*best)[0]) == 0.0);
  }
  SUBCASE("one restart cannot reach a half-turn") {
    save_image(warp_image(t, {0, 0, 180, 0}, 64, 64), dir / "half.pgm");
    const std::string base = "align --template " + quote(tmpl) + " --target-patch " + quote(dir / "half.pgm");
    REQUIRE(run(base + " --restarts 1 --output " + quote(dir / "r1.json")) == 0);
    REQUIRE(run(base + " --restarts 8 --output " + quote(dir / "r8.json")) == 0);
    const double s1 = nlohmann::json::parse(slurp(dir / "r1.json"))["S"].get<double>();
    const double s8 = nlohmann::json::parse(slurp(dir / "r8.json"))["S"].get<double>();
    CHECK(s1 < s8);
  }
  SUBCASE("errors") {
    CHECK(run(self + " --restarts 2 --step-translation 1e12 --output " + quote(dir / "d.json")) == 4);
    CHECK_FALSE(fs::exists(dir / "d.json"));
    save_image(Image(60, 64, 1, 0.5), dir / "bad.pgm");
    CHECK(run("align --template " + quote(tmpl) + " --target-patch " + quote(dir / "bad.pgm")) == 3);
    CHECK(run(self + " --sweep z") == 3);
    CHECK(run(self + " --sweep r --grid 5:1:1") == 3);
    CHECK(run(self + " --seed-pose 1,2,3") == 3);
  }
}

TEST_CASE("gradcheck") {
  ScratchDir dir;
  CHECK(run("gradcheck --what primitives", dir / "p.csv") == 0);
  const auto rows = csv_rows(slurp(dir / "p.csv"));
  CHECK(rows.size() > 20);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].back() == "PASS");
    CHECK(std::stod(rows[i][2]) < 1e-4);
  }
  CHECK(run("gradcheck --what hog --trials 10", dir / "h.csv") == 0);
  for (const auto& r : csv_rows(slurp(dir / "h.csv"))) {
    if (r[0] != "hog") continue;
    CHECK(std::stod(r[2]) < 1e-4);
    CHECK(std::stoi(r[3]) >= 600);
  }
  // The test build scales every adjoint of the input by 1.5.
  CHECK(run("gradcheck --what hog", "/dev/null", "/dev/null", DHOG_FAULTY) == 5);
  CHECK(run("gradcheck --what nothing") == 3);
}

TEST_CASE("metrics") {
  ScratchDir dir;
  const std::string a = suite("01_camera");
  SUBCASE("self comparison") {
    REQUIRE(run("metrics --a " + quote(a) + " --b " + quote(a), dir / "m.csv") == 0);
    const auto rows = csv_rows(slurp(dir / "m.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(std::stod(rows[1][1]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::stod(rows[1][3]) == doctest::Approx(entropy32(load_image(a))).epsilon(1e-12));
    CHECK(std::stod(rows[1][4]) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("suite has a mean row and both formats agree") {
    fs::create_directories(dir / "x");
    fs::create_directories(dir / "y");
    for (const auto& e : fs::directory_iterator(data_path("suite"))) {
      fs::copy_file(e.path(), dir / "x" / e.path().filename());
      Image img = load_image(e.path());
      img.data = 1.0 - img.data;
      save_image(img, dir / "y" / (e.path().stem().string() + ".png"));
    }
    const std::string args = "metrics --suite " + quote(dir / "x") + " " + quote(dir / "y");
    REQUIRE(run(args, dir / "s.csv") == 0);
    REQUIRE(run(args + " --format json --output " + quote(dir / "s.json")) == 0);
    REQUIRE(run("--threads 3 " + args, dir / "t.csv") == 0);
    CHECK(slurp(dir / "s.csv") == slurp(dir / "t.csv"));
    const auto rows = csv_rows(slurp(dir / "s.csv"));
    REQUIRE(rows.size() == 22);
    CHECK(rows.back()[0] == "mean");
    const auto j = nlohmann::json::parse(slurp(dir / "s.json"));
    REQUIRE(j.size() == 21);
    const char* keys[4] = {"cross_correlation", "raw_cross_correlation", "mutual_information", "ssim"};
    for (std::size_t i = 0; i < 21; ++i) {
      CHECK(j[i]["name"].get<std::string>() == rows[i + 1][0]);
      for (int k = 0; k < 4; ++k) CHECK(j[i][keys[k]].get<double>() == std::stod(rows[i + 1][k + 1]));
    }
    // Inverted intensities: perfectly anticorrelated.
    CHECK(std::stod(rows[1][1]) == doctest::Approx(-1.0).epsilon(1e-9));
  }
  SUBCASE("errors") {
    CHECK(run("metrics --a " + quote(a)) == 3);
    CHECK(run("metrics --a " + quote(a) + " --b " + quote(data_path("png/red_3x2.png"))) == 3);
    CHECK(run("metrics --a " + quote(a) + " --b " + quote(dir / "nope.png")) == 2);
    CHECK(run("metrics --suite " + quote(dir.path()) + " " + quote(dir / "none")) == 2);
  }
}
