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


// dhog: extract, invert, align, gradcheck, metrics.
//
// Exit codes: 0 ok, 2 I/O or format, 3 configuration, 4 divergence or
// numeric failure, 5 gradient check failure.

#include "dhog/align.hpp"
#include "dhog/error.hpp"
#include "dhog/gradcheck_suite.hpp"
#include "dhog/io.hpp"
#include "dhog/metrics.hpp"
#include "dhog/preimage.hpp"
#ifdef DHOG_FAULT_INJECTION
#include "dhog/testing.hpp"
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using dhog::Index;

namespace {

enum Exit { kOk = 0, kIo = 2, kConfig = 3, kDiverged = 4, kGradcheck = 5 };

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  int verbose = 0;
};

struct HogFlags {
  int cell = 8;
  int bins = 0;  // 0: 9 unsigned, 18 signed
  std::string mode = "unsigned";
  std::string norm_style = "paper";
  double epsilon = 1e-4;
  bool no_normalize = false;

  void add(CLI::App* app, bool geometry) {
    if (geometry) {
      app->add_option("--cell", cell, "cell size in pixels")->check(CLI::Range(2, 1 << 16));
      app->add_option("--bins", bins, "orientation bins (default 9 unsigned, 18 signed)")
          ->check(CLI::Range(2, 1 << 16));
      app->add_option("--mode", mode, "orientation mode")->check(CLI::IsMember({"unsigned", "signed"}));
      app->add_flag("--no-normalize", no_normalize, "skip the global normalization");
    }
    app->add_option("--norm-style", norm_style, "v/sqrt(|v|+eps) or v/sqrt(|v|^2+eps)")
        ->check(CLI::IsMember({"paper", "squared"}));
    app->add_option("--epsilon", epsilon, "normalization constant");
  }

  dhog::HogConfig config() const {
    dhog::HogConfig c = mode == "signed" ? dhog::HogConfig::signed_orientation() : dhog::HogConfig::dalal();
    c.cell = cell;
    if (bins > 0) c.bins = bins;
    c.epsilon = epsilon;
    c.normalize = !no_normalize;
    c.norm_style = norm_style == "squared" ? dhog::NormStyle::kSquared : dhog::NormStyle::kPaper;
    c.validate();
    return c;
  }
};

void log(const Globals& g, int level, const std::string& msg) {
  if (g.verbose >= level) std::cerr << msg << "\n";
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    dhog::write_file_atomic(path, text.data(), text.size());
  }
}

// Runs fn(i) for i < n on up to `threads` workers; callers write into slot i.
template <typename Fn>
void for_each_index(std::size_t n, int threads, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  // First failure in input order, so the reported error is deterministic.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- extract

struct ExtractArgs {
  std::string input, output;
  int scale = 1;
  HogFlags hog;
};

int run_extract(const Globals& g, const ExtractArgs& a) {
  const dhog::HogConfig cfg = a.hog.config();
  const Index root = static_cast<Index>(std::lround(std::sqrt(a.scale)));
  if (root * root != a.scale) throw dhog::ConfigError("--scale must be a perfect square");
  dhog::Image img = dhog::to_gray(dhog::load_image(a.input));
  if (root > 1) {
    if (img.width % root != 0 || img.height % root != 0) {
      throw dhog::ConfigError("image extents are not divisible by sqrt(scale)");
    }
    img = dhog::downsample_box(img, root);
  }
  if (img.width % cfg.cell != 0 || img.height % cfg.cell != 0) {
    const dhog::Image cropped = dhog::center_crop_to_multiple(img, cfg.cell);
    std::cerr << "warning: " << img.width << "x" << img.height << " is not divisible by cell " << cfg.cell
              << "; center-cropping to " << cropped.width << "x" << cropped.height << "\n";
    img = cropped;
  }
  if (img.width < cfg.cell || img.height < cfg.cell) throw dhog::ConfigError("image is smaller than one cell");
  const dhog::HogDescriptor d = dhog::compute_hog(img, cfg);
  dhog::write_descriptor(d, a.output);
  log(g, 1, "wrote " + d.grid.shape().str() + " descriptor to " + a.output);
  return kOk;
}

// ---- invert

struct InvertArgs {
  std::vector<std::string> targets;
  std::string schedule = "single", opt = "momentum", init = "gray", output, trace;
  double xi = 1e2;
  dhog::OptimizerConfig o;
  HogFlags hog;
};

int scale_of(const dhog::HogDescriptor& full, const dhog::HogDescriptor& d) {
  if (full.cells_x() % d.cells_x() != 0 || full.cells_y() % d.cells_y() != 0) return -1;
  const Index rx = full.cells_x() / d.cells_x(), ry = full.cells_y() / d.cells_y();
  return rx == ry ? static_cast<int>(rx * rx) : -1;
}

int run_invert(const Globals& g, const InvertArgs& a) {
  dhog::OptimizerConfig o = a.o;
  o.method = a.opt == "dogleg" ? dhog::Method::kDogleg : dhog::Method::kMomentum;
  o.validate();
  if (!(a.xi >= 0.0)) throw dhog::ConfigError("--xi must be >= 0");
  const bool more = a.schedule == "multi-more";
  if (!more && a.targets.size() != 1) throw dhog::ConfigError("this schedule takes exactly one --target");

  dhog::ReconstructionProblem p;
  p.cfg = a.hog.config();
  p.xi = a.xi;
  p.init = a.init == "noise" ? dhog::Init::kNoise : dhog::Init::kGray;
  p.seed = g.seed;
  p.schedule = a.schedule == "single"  ? dhog::Schedule::kSingle
               : a.schedule == "multi" ? dhog::Schedule::kMultiScale
                                       : dhog::Schedule::kMultiScaleMore;

  std::vector<dhog::HogDescriptor> ds;
  for (const auto& t : a.targets) ds.push_back(dhog::read_descriptor(t));
  const auto full = std::max_element(ds.begin(), ds.end(), [](const auto& x, const auto& y) {
    return x.grid.size() < y.grid.size();
  });
  for (const auto& d : ds) {
    const int s = more ? scale_of(*full, d) : 1;
    if (std::find(std::begin(dhog::kScaleLadder), std::end(dhog::kScaleLadder), s) == std::end(dhog::kScaleLadder)) {
      throw dhog::ConfigError("target " + d.grid.shape().str() + " is not a ladder scale of " +
                              full->grid.shape().str());
    }
    if (!p.targets.emplace(s, d).second) throw dhog::ConfigError("two targets for scale " + std::to_string(s));
  }

  const dhog::Reconstruction r = dhog::reconstruct(p, o);
  dhog::save_image(r.image, a.output);
  if (!a.trace.empty()) dhog::write_trace_csv(r.trace, a.trace);
  log(g, 1, "final E " + number(r.trace.empty() ? 0.0 : r.trace.back().energy) + " after " +
                std::to_string(r.trace.size()) + " evaluations");
  return kOk;
}

// ---- align

struct AlignArgs {
  std::string tmpl, patch, output, sweep, grid, traces, seed_pose;
  int restarts = 8;
  dhog::AlignOptimizerConfig o;
  HogFlags hog;
};

std::vector<double> parse_list(const std::string& s, char sep, std::size_t expect, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw dhog::ConfigError(std::string("bad ") + what + ": " + s);
    }
  }
  if (v.size() != expect) throw dhog::ConfigError(std::string("bad ") + what + ": " + s);
  return v;
}

std::vector<double> sweep_grid(const std::string& param, const std::string& text) {
  std::vector<double> lim;
  if (!text.empty()) {
    lim = parse_list(text, ':', 3, "--grid (from:to:step)");
  } else if (param == "r") {
    lim = {-180, 180, 1};
  } else if (param == "sigma") {
    lim = {-0.5, 0.5, 0.01};
  } else {
    lim = {-8, 8, 0.25};
  }
  if (!(lim[2] > 0.0) || lim[1] < lim[0]) throw dhog::ConfigError("--grid needs from <= to and step > 0");
  const auto n = static_cast<long>(std::floor((lim[1] - lim[0]) / lim[2] + 1e-9));
  if (n > 1000000) throw dhog::ConfigError("--grid has too many points");
  std::vector<double> grid;
  for (long i = 0; i <= n; ++i) grid.push_back(lim[0] + static_cast<double>(i) * lim[2]);
  return grid;
}

int run_align(const Globals& g, const AlignArgs& a) {
  dhog::AlignOptimizerConfig o = a.o;
  o.threads = g.threads;
  o.validate();
  const dhog::HogConfig cfg = a.hog.config();
  std::vector<double> grid;
  if (!a.sweep.empty()) grid = sweep_grid(a.sweep, a.grid);
  std::optional<dhog::Pose2D> seed;
  if (!a.seed_pose.empty()) {
    const auto v = parse_list(a.seed_pose, ',', 4, "--seed-pose (tx,ty,r,sigma)");
    seed = dhog::Pose2D{v[0], v[1], v[2], v[3]};
  }

  dhog::AlignmentProblem p =
      dhog::make_alignment_problem(dhog::load_image(a.tmpl), dhog::load_image(a.patch), cfg, a.restarts);
  p.seed = seed;

  if (!a.sweep.empty()) {
    const std::map<std::string, dhog::PoseParam> params{
        {"tx", dhog::PoseParam::kTx}, {"ty", dhog::PoseParam::kTy}, {"r", dhog::PoseParam::kR},
        {"sigma", dhog::PoseParam::kSigma}};
    std::string csv = "value,S,dSdparam\n";
    for (const dhog::SweepRow& row : dhog::sweep(p, params.at(a.sweep), grid, seed.value_or(dhog::Pose2D{}))) {
      csv += number(row.value) + "," + number(row.s) + "," + number(row.ds) + "\n";
    }
    write_text(a.output, csv);
    return kOk;
  }

  const dhog::AlignmentResult r = dhog::estimate_pose(p, o);
  nlohmann::ordered_json j;
  j["tx"] = r.pose.tx;
  j["ty"] = r.pose.ty;
  j["r"] = r.pose.r;
  j["sigma"] = r.pose.sigma;
  j["S"] = r.s;
  j["restart"] = r.restart;
  j["restarts"] = nlohmann::json::array();
  for (std::size_t k = 0; k < r.restarts.size(); ++k) {
    const dhog::RestartTrace& t = r.restarts[k];
    nlohmann::ordered_json rj;
    rj["start_r"] = t.start.r;
    rj["best_S"] = t.diverged ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(t.best_s);
    rj["diverged"] = t.diverged;
    rj["iterations"] = t.rows.size();
    j["restarts"].push_back(rj);
    if (!a.traces.empty()) {
      std::string csv = "iteration,tx,ty,r,sigma,S\n";
      for (const dhog::PoseTraceRow& row : t.rows) {
        csv += std::to_string(row.iteration) + "," + number(row.pose.tx) + "," + number(row.pose.ty) + "," +
               number(row.pose.r) + "," + number(row.pose.sigma) + "," + number(row.s) + "\n";
      }
      write_text(a.traces + std::to_string(k) + ".csv", csv);
    }
  }
  write_text(a.output, j.dump(2) + "\n");
  return kOk;
}

// ---- gradcheck

struct GradcheckArgs {
  std::string what = "all";
  int trials = 3;
  double step = 0.0;  // 0: per-target default
  Index size = 64;
};

int run_gradcheck(const Globals& g, const GradcheckArgs& a) {
  dhog::GradcheckSuiteOptions o;
  o.trials = a.trials;
  if (a.step > 0.0) o.step = a.step;
  o.seed = g.seed;
  o.size = a.size;
#ifdef DHOG_FAULT_INJECTION
  o.input_hook = [](dhog::Var v) { return dhog::testing::corrupt_adjoint(v, 1.5); };
#endif
  const std::map<std::string, dhog::GradcheckTarget> targets{{"primitives", dhog::GradcheckTarget::kPrimitives},
                                                            {"hog", dhog::GradcheckTarget::kHog},
                                                            {"objective", dhog::GradcheckTarget::kObjective},
                                                            {"pose", dhog::GradcheckTarget::kPose}};
  std::vector<dhog::GradcheckLine> lines;
  for (const auto& [name, t] : targets) {
    if (a.what != "all" && a.what != name) continue;
    auto part = dhog::run_gradchecks(t, o);
    lines.insert(lines.end(), part.begin(), part.end());
  }
  std::cout << "target,check,max_relative_error,checked,excluded,result\n";
  for (const auto& l : lines) {
    std::cout << l.target << "," << l.name << "," << number(l.report.max_relative_error) << "," << l.report.checked
              << "," << l.report.excluded << "," << (l.report.passed() ? "PASS" : "FAIL") << "\n";
  }
  return dhog::all_passed(lines) ? kOk : kGradcheck;
}

// ---- metrics

struct MetricsArgs {
  std::string a, b, output, format = "csv";
  std::vector<std::string> suite;
  int bins = dhog::kDefaultMiBins;
};

// Pairs files of two directories by stem; extensions may differ.
std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> suite_pairs(const fs::path& da,
                                                                               const fs::path& db) {
  const auto list = [](const fs::path& d) {
    if (!fs::is_directory(d)) throw dhog::IoError("not a directory: " + d.string());
    std::map<std::string, fs::path> m;
    for (const auto& e : fs::directory_iterator(d)) {
      if (!e.is_regular_file()) continue;
      if (!m.emplace(e.path().stem().string(), e.path()).second) {
        throw dhog::ConfigError("two files named " + e.path().stem().string() + " in " + d.string());
      }
    }
    return m;
  };
  const auto ma = list(da), mb = list(db);
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> out;
  for (const auto& [stem, pa] : ma) {
    const auto it = mb.find(stem);
    if (it == mb.end()) throw dhog::ConfigError("no counterpart for " + stem + " in " + db.string());
    out.push_back({stem, {pa, it->second}});
  }
  if (out.size() != mb.size()) throw dhog::ConfigError("the suite directories hold different file sets");
  if (out.empty()) throw dhog::ConfigError("empty suite");
  return out;
}

int run_metrics(const Globals& g, const MetricsArgs& a) {
  if (a.bins < 2) throw dhog::ConfigError("--bins must be >= 2");
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (!a.suite.empty()) {
    pairs = suite_pairs(a.suite[0], a.suite[1]);
  } else {
    pairs.push_back({fs::path(a.b).stem().string(), {a.a, a.b}});
  }
  std::vector<dhog::MetricReport> reports(pairs.size());
  for_each_index(pairs.size(), g.threads, [&](std::size_t i) {
    reports[i] = dhog::compare_images(dhog::load_image(pairs[i].second.first),
                                      dhog::load_image(pairs[i].second.second), a.bins);
  });

  std::vector<std::pair<std::string, dhog::MetricReport>> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) rows.push_back({pairs[i].first, reports[i]});
  if (!a.suite.empty()) {
    dhog::MetricReport mean;
    for (const auto& r : reports) {
      mean.cross_correlation += r.cross_correlation;
      mean.raw_cross_correlation += r.raw_cross_correlation;
      mean.mutual_information += r.mutual_information;
      mean.ssim += r.ssim;
    }
    const double n = static_cast<double>(reports.size());
    mean.cross_correlation /= n;
    mean.raw_cross_correlation /= n;
    mean.mutual_information /= n;
    mean.ssim /= n;
    rows.push_back({"mean", mean});
  }

  std::string text;
  if (a.format == "json") {
    nlohmann::ordered_json j = nlohmann::json::array();
    for (const auto& [name, r] : rows) {
      j.push_back({{"name", name},
                   {"cross_correlation", r.cross_correlation},
                   {"raw_cross_correlation", r.raw_cross_correlation},
                   {"mutual_information", r.mutual_information},
                   {"ssim", r.ssim}});
    }
    text = j.dump(2) + "\n";
  } else {
    text = "name,cross_correlation,raw_cross_correlation,mutual_information,ssim\n";
    for (const auto& [name, r] : rows) {
      text += name + "," + number(r.cross_correlation) + "," + number(r.raw_cross_correlation) + "," +
              number(r.mutual_information) + "," + number(r.ssim) + "\n";
    }
  }
  write_text(a.output, text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable HOG: extraction, inversion, alignment and metrics"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice");
  app.add_option("--threads", g.threads, "worker threads across independent units")->check(CLI::Range(1, 256));
  app.add_flag("-v,--verbose", g.verbose, "more logging on stderr");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "compute a descriptor file from an image");
  extract->add_option("--input", ex.input, "image (PNG, PGM or PPM)")->required();
  extract->add_option("--output", ex.output, "GHOG file")->required();
  extract->add_option("--scale", ex.scale, "box-downsample by sqrt(s) first")->check(CLI::IsMember({1, 4, 16, 64}));
  ex.hog.add(extract, true);

  InvertArgs inv;
  auto* invert = app.add_subcommand("invert", "reconstruct an image from descriptor files");
  invert->add_option("--target", inv.targets, "GHOG file; multi-more takes one per scale")->required();
  invert->add_option("--schedule", inv.schedule)->check(CLI::IsMember({"single", "multi", "multi-more"}));
  invert->add_option("--xi", inv.xi, "smoothness weight");
  invert->add_option("--opt", inv.opt)->check(CLI::IsMember({"momentum", "dogleg"}));
  invert->add_option("--init", inv.init)->check(CLI::IsMember({"gray", "noise"}));
  invert->add_option("--iters", inv.o.max_iterations, "iteration cap per stage");
  invert->add_option("--step", inv.o.step, "momentum step size");
  invert->add_option("--momentum", inv.o.momentum);
  invert->add_option("--tolerance", inv.o.tolerance, "relative decrease over the window that counts as a stall");
  invert->add_option("--window", inv.o.window);
  invert->add_option("--halvings", inv.o.step_halvings, "step halvings on stall before stopping");
  invert->add_option("--cg-iters", inv.o.cg_iterations, "conjugate-gradient iterations (dogleg)");
  invert->add_flag("--xi-decay", inv.o.xi_decay, "anneal xi linearly to zero in each stage");
  invert->add_option("--output", inv.output, "reconstructed image")->required();
  invert->add_option("--trace", inv.trace, "energy trace CSV");
  inv.hog.add(invert, false);

  AlignArgs al;
  al.hog.norm_style = "squared";
  auto* align = app.add_subcommand("align", "estimate the pose of a template in a patch");
  align->add_option("--template", al.tmpl)->required();
  align->add_option("--target-patch", al.patch)->required();
  align->add_option("--restarts", al.restarts)->check(CLI::Range(1, 4096));
  align->add_option("--sweep", al.sweep, "tabulate S along one parameter instead")
      ->check(CLI::IsMember({"tx", "ty", "r", "sigma"}));
  align->add_option("--grid", al.grid, "sweep grid from:to:step");
  align->add_option("--seed-pose", al.seed_pose, "start pose tx,ty,r,sigma");
  align->add_option("--iters", al.o.max_iterations);
  align->add_option("--momentum", al.o.momentum);
  align->add_option("--step-translation", al.o.step_translation);
  align->add_option("--step-rotation", al.o.step_rotation);
  align->add_option("--step-sigma", al.o.step_sigma);
  align->add_option("--output", al.output, "JSON pose or sweep CSV (default stdout)");
  align->add_option("--traces", al.traces, "per-restart trace CSVs, written to <prefix><k>.csv");
  al.hog.add(align, true);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare adjoints with central differences");
  gradcheck->add_option("--what", gc.what)->check(CLI::IsMember({"all", "primitives", "hog", "objective", "pose"}));
  gradcheck->add_option("--trials", gc.trials)->check(CLI::Range(1, 1000));
  gradcheck->add_option("--step", gc.step, "finite-difference step (default per target)")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--size", gc.size, "image extent")->check(CLI::Range(16, 1024));

  MetricsArgs me;
  auto* metrics = app.add_subcommand("metrics", "compare images");
  auto* oa = metrics->add_option("--a", me.a);
  auto* ob = metrics->add_option("--b", me.b);
  auto* os = metrics->add_option("--suite", me.suite, "two directories paired by file stem")->expected(2);
  oa->needs(ob);
  ob->needs(oa);
  os->excludes(oa)->excludes(ob);
  metrics->add_option("--format", me.format)->check(CLI::IsMember({"csv", "json"}));
  metrics->add_option("--bins", me.bins, "mutual information histogram bins");
  metrics->add_option("--output", me.output, "default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*extract) return run_extract(g, ex);
    if (*invert) return run_invert(g, inv);
    if (*align) return run_align(g, al);
    if (*gradcheck) return run_gradcheck(g, gc);
    if (*metrics) {
      if (me.a.empty() && me.suite.empty()) throw dhog::ConfigError("metrics needs --a/--b or --suite");
      return run_metrics(g, me);
    }
  } catch (const dhog::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const dhog::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const dhog::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const dhog::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const dhog::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
