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


#include "dhog/preimage.hpp"

#include "dhog/error.hpp"
#include "dhog/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace dhog {

namespace {

constexpr double kDivergenceFactor = 1e6;

std::vector<Index> iota_indices(Index n, Index start = 0) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), start);
  return v;
}

struct Neighbors {
  Var horizontal;  // i(y, x + 1) - i(y, x)
  Var vertical;    // i(y + 1, x) - i(y, x)
};

Neighbors neighbor_differences(Var img) {
  const Index h = img.shape()[0], w = img.shape()[1];
  if (img.shape().rank() != 2 || h < 2 || w < 2) throw ShapeError("smoothness needs a 2D image of at least 2x2");
  const Kernel dx(1, 2, {-1.0, 1.0}), dy(2, 1, {-1.0, 1.0});
  const auto all_r = iota_indices(h), all_c = iota_indices(w);
  const auto head_r = iota_indices(h - 1), head_c = iota_indices(w - 1);
  return {conv2d_subsample(img, dx, all_r, head_c), conv2d_subsample(img, dy, head_r, all_c)};
}

Var smoothed_abs_sum(Var d) { return sum(smooth_abs(d, kSmoothnessDelta)); }

Tensor gray_tensor(const Image& img) {
  const Image g = img.channels == 3 ? to_gray(img) : img;
  return Tensor(Shape{g.height, g.width}, g.data);
}

Image from_gray(const Tensor& t) { return Image::from_tensor(t); }

void check_geometry(const Image& img, const HogConfig& sc, const HogDescriptor& target) {
  if (img.height != target.cells_y() * sc.cell || img.width != target.cells_x() * sc.cell) {
    throw ShapeError("estimate of " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     " does not fit a " + target.grid.shape().str() + " target at cell " +
                     std::to_string(sc.cell));
  }
}

Tensor clamp01(const Eigen::ArrayXd& a, const Shape& s) { return Tensor(s, Eigen::ArrayXd(a.max(0.0).min(1.0))); }

double xi_at(const OptimizerConfig& opt, double xi, int k) {
  if (!opt.xi_decay || opt.max_iterations == 0) return xi;
  return xi * (1.0 - static_cast<double>(k) / opt.max_iterations);
}

// Relative best-energy decrease over the trailing window.
bool stalled(const std::vector<double>& best, const OptimizerConfig& opt) {
  const auto k = best.size() - 1;
  if (k < static_cast<std::size_t>(opt.window)) return false;
  const double before = best[k - static_cast<std::size_t>(opt.window)];
  return before - best[k] <= opt.tolerance * before;
}

Reconstruction minimize_momentum(const Tensor& x0, const HogDescriptor& target, const HogConfig& sc, double xi,
                                 const OptimizerConfig& opt, int stage) {
  Reconstruction out;
  Tensor x = x0;
  Eigen::ArrayXd velocity = Eigen::ArrayXd::Zero(x.size());
  Tensor best_x = x;
  double best = std::numeric_limits<double>::infinity();
  double initial = 0.0;
  std::vector<double> best_history;
  double step = opt.step;
  int halvings_left = opt.step_halvings;
  for (int k = 0;; ++k) {
    Tape tape;
    Var X = tape.variable(x);
    const ObjectiveTerms terms = objective_terms(X, target, sc, xi_at(opt, xi, k));
    const double e = terms.total.item();
    if (k == 0) initial = e;
    if (e > kDivergenceFactor * initial) {
      throw DivergenceError("objective diverged at iteration " + std::to_string(k) + " of stage " +
                            std::to_string(stage) + ": E=" + std::to_string(e) + ", initial " +
                            std::to_string(initial));
    }
    out.trace.push_back({k, stage, e, terms.feature.item(), terms.smoothness.item()});
    if (e < best) {
      best = e;
      best_x = x;
    }
    best_history.push_back(best);
    if (best <= opt.energy_floor || k >= opt.max_iterations) break;
    if (stalled(best_history, opt)) {
      if (halvings_left-- == 0) break;
      // Resume from the best point with a smaller step.
      step *= 0.5;
      velocity.setZero();
      x = best_x;
      best_history.assign(1, best);
      continue;
    }

    tape.backward(terms.total);
    const Tensor g = tape.grad(X);
    if ((g.array() == 0.0).all()) break;
    velocity = opt.momentum * velocity - step * g.array();
    x = clamp01(x.array() + velocity, x.shape());
  }
  out.image = from_gray(best_x);
  return out;
}

// Least-squares form used by the trust-region solver: residual
// [phi(x) - t ; sqrt(xi) * (i_p - i_q)] and energy ||r||^2.
struct Residual {
  std::unique_ptr<Tape> tape;
  Var x;
  Var r;
  double energy;
  double feature;
  double smoothness;
};

Residual residual_at(const Tensor& x, const HogDescriptor& target, const HogConfig& sc, double xi) {
  Residual res{std::make_unique<Tape>(), {}, {}, 0.0, 0.0, 0.0};
  res.x = res.tape->variable(x);
  Var diff = hog_forward(res.x, sc) - res.tape->constant(target.grid);
  const Neighbors n = neighbor_differences(res.x);
  const double w = std::sqrt(xi);
  const std::vector<Var> parts{diff, n.horizontal * w, n.vertical * w};
  res.r = concat(parts);
  res.feature = diff.value().array().square().sum();
  res.smoothness = n.horizontal.value().array().square().sum() + n.vertical.value().array().square().sum();
  res.energy = res.r.value().array().square().sum();
  return res;
}

Eigen::ArrayXd jvp(Residual& res, const Eigen::ArrayXd& v) {
  const std::vector<std::pair<Var, Tensor>> seeds{{res.x, Tensor(res.x.shape(), v)}};
  res.tape->push_forward(seeds);
  return res.tape->tangent_of(res.r).array();
}

Eigen::ArrayXd vjp(Residual& res, const Eigen::ArrayXd& u) {
  res.tape->backward(res.r, Tensor(res.r.shape(), u));
  return res.tape->grad(res.x).array();
}

// Approximately solves (J^T J) p = -g by conjugate gradients.
Eigen::ArrayXd gauss_newton_step(Residual& res, const Eigen::ArrayXd& g, int iterations) {
  Eigen::ArrayXd p = Eigen::ArrayXd::Zero(g.size());
  Eigen::ArrayXd rem = -g;
  Eigen::ArrayXd d = rem;
  double rr = rem.square().sum();
  const double stop = 1e-20 * rr;
  for (int i = 0; i < iterations && rr > stop; ++i) {
    const Eigen::ArrayXd Jd = jvp(res, d);
    const double curvature = Jd.square().sum();
    if (!(curvature > 0.0)) break;
    const Eigen::ArrayXd Ad = vjp(res, Jd);
    const double alpha = rr / curvature;
    p += alpha * d;
    rem -= alpha * Ad;
    const double rr_next = rem.square().sum();
    d = rem + (rr_next / rr) * d;
    rr = rr_next;
  }
  return p;
}

Eigen::ArrayXd dogleg_blend(const Eigen::ArrayXd& sd, const Eigen::ArrayXd& gn, double radius) {
  const double gn_norm = std::sqrt(gn.square().sum());
  if (gn_norm <= radius) return gn;
  const double sd_norm = std::sqrt(sd.square().sum());
  if (sd_norm >= radius) return sd * (radius / sd_norm);
  // Find tau in [0, 1] with ||sd + tau (gn - sd)|| = radius.
  const Eigen::ArrayXd diff = gn - sd;
  const double a = diff.square().sum();
  const double b = 2.0 * (sd * diff).sum();
  const double c = sd_norm * sd_norm - radius * radius;
  const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a);
  return sd + tau * diff;
}

Reconstruction minimize_dogleg(const Tensor& x0, const HogDescriptor& target, const HogConfig& sc, double xi,
                               const OptimizerConfig& opt, int stage) {
  Reconstruction out;
  Residual cur = residual_at(x0, target, sc, xi_at(opt, xi, 0));
  const double initial = cur.energy;
  double radius = -1.0;
  std::vector<double> history;
  for (int k = 0;; ++k) {
    out.trace.push_back({k, stage, cur.energy, cur.feature, cur.smoothness});
    history.push_back(cur.energy);
    if (cur.energy <= opt.energy_floor || stalled(history, opt) || k >= opt.max_iterations) break;

    const Eigen::ArrayXd r = cur.r.value().array();
    const Eigen::ArrayXd g = vjp(cur, r);  // half the gradient of ||r||^2
    const double gg = g.square().sum();
    if (gg == 0.0) break;
    const double jg = jvp(cur, g).square().sum();
    const Eigen::ArrayXd sd = jg > 0.0 ? Eigen::ArrayXd(-(gg / jg) * g) : Eigen::ArrayXd(-g);
    if (radius < 0.0) radius = std::sqrt(sd.square().sum());
    const Eigen::ArrayXd gn = gauss_newton_step(cur, g, opt.cg_iterations);
    const Eigen::ArrayXd p = dogleg_blend(sd, gn, radius);

    const Tensor& x = cur.x.value();
    const Tensor trial = clamp01(x.array() + p, x.shape());
    const Eigen::ArrayXd taken = trial.array() - x.array();
    const double predicted = -(2.0 * (g * taken).sum() + jvp(cur, taken).square().sum());
    Residual next = residual_at(trial, target, sc, xi_at(opt, xi, k + 1));
    if (next.energy > kDivergenceFactor * initial) {
      throw DivergenceError("objective diverged at iteration " + std::to_string(k) + " of stage " +
                            std::to_string(stage));
    }
    const double actual = cur.energy - next.energy;
    const double ratio = predicted > 0.0 ? actual / predicted : -1.0;
    if (ratio > 0.75) radius *= 2.0;
    if (ratio < 0.25) radius *= 0.25;
    if (ratio > 0.0 && actual > 0.0) cur = std::move(next);
    if (radius < 1e-12) break;
  }
  out.image = from_gray(cur.x.value());
  return out;
}

Reconstruction run_stage(const Image& start, const HogDescriptor& target, const HogConfig& cfg, double xi,
                         const OptimizerConfig& opt, int stage, Reconstruction& acc) {
  Reconstruction r = minimize(start, target, cfg, xi, opt, stage);
  acc.trace.insert(acc.trace.end(), r.trace.begin(), r.trace.end());
  return r;
}

int root_of_scale(int s) {
  const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s))));
  if (root * root != s) throw ConfigError("scale factors must be perfect squares, got " + std::to_string(s));
  return root;
}

const HogDescriptor& full_target(const ReconstructionProblem& p) {
  const auto it = p.targets.find(1);
  if (it == p.targets.end()) throw ConfigError("no full-resolution (s = 1) target");
  return it->second;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(step > 0.0)) throw ConfigError("step size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 0) throw ConfigError("iteration cap must be >= 0");
  if (window < 1) throw ConfigError("convergence window must be >= 1");
  if (cg_iterations < 1) throw ConfigError("CG iteration count must be >= 1");
  if (step_halvings < 0) throw ConfigError("step halvings must be >= 0");
}

Var smoothness(Var img) {
  const Neighbors n = neighbor_differences(img);
  return smoothed_abs_sum(n.horizontal) + smoothed_abs_sum(n.vertical);
}

HogConfig stage_config(const HogDescriptor& target, const HogConfig& cfg) {
  HogConfig sc = cfg;
  sc.cell = target.config.cell;
  sc.bins = target.config.bins;
  sc.orientation = target.config.orientation;
  sc.validate();
  return sc;
}

ObjectiveTerms objective_terms(Var img, const HogDescriptor& target, const HogConfig& cfg, double xi) {
  if (!(xi >= 0.0)) throw ConfigError("smoothness weight must be >= 0");
  if (target.grid.rank() != 3 || target.bins() != cfg.bins) throw ConfigError("target does not match the config");
  const Var phi = hog_forward(img, cfg);
  if (phi.shape() != target.grid.shape()) {
    throw ShapeError("descriptor " + phi.shape().str() + " does not match target " + target.grid.shape().str());
  }
  Var feature = l2norm(phi - img.tape().constant(target.grid));
  Var smooth = smoothness(img);
  return {feature + smooth * xi, feature, smooth};
}

Var objective(Var img, const HogDescriptor& target, const HogConfig& cfg, double xi) {
  return objective_terms(img, target, cfg, xi).total;
}

Image initial_estimate(Index width, Index height, Init init, std::uint64_t seed) {
  Image img(width, height, 1, 0.5);
  if (init == Init::kNoise) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.4, 0.6);
    for (Index i = 0; i < img.data.size(); ++i) img.data[i] = dist(rng);
  }
  return img;
}

Reconstruction minimize(const Image& start, const HogDescriptor& target, const HogConfig& cfg, double xi,
                        const OptimizerConfig& opt, int stage) {
  opt.validate();
  if (!(xi >= 0.0)) throw ConfigError("smoothness weight must be >= 0");
  const HogConfig sc = stage_config(target, cfg);
  check_geometry(start, sc, target);
  const Tensor x0 = clamp01(gray_tensor(start).array(), Shape{start.height, start.width});
  return opt.method == Method::kDogleg ? minimize_dogleg(x0, target, sc, xi, opt, stage)
                                       : minimize_momentum(x0, target, sc, xi, opt, stage);
}

Reconstruction reconstruct_single(const ReconstructionProblem& p, const OptimizerConfig& opt) {
  const HogDescriptor& t = full_target(p);
  const int c = t.config.cell;
  const Image start = initial_estimate(t.cells_x() * c, t.cells_y() * c, p.init, p.seed);
  return minimize(start, t, p.cfg, p.xi, opt, 1);
}

Reconstruction reconstruct_multiscale(const ReconstructionProblem& p, const OptimizerConfig& opt) {
  const HogDescriptor& t = full_target(p);
  const int c = t.config.cell;
  std::vector<int> stages;
  for (int s : kScaleLadder) {
    const int root = root_of_scale(s);
    if (c % root == 0 && c / root >= 2 && (c / root) % 2 == 0) stages.push_back(s);
  }
  Reconstruction acc;
  Image estimate;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const int root = root_of_scale(stages[i]);
    HogDescriptor stage_target = t;
    stage_target.config.cell = c / root;
    const Index w = t.cells_x() * stage_target.config.cell, h = t.cells_y() * stage_target.config.cell;
    estimate = i == 0 ? initial_estimate(w, h, p.init, p.seed) : resize_image(estimate, w, h);
    estimate = run_stage(estimate, stage_target, p.cfg, p.xi, opt, stages[i], acc).image;
  }
  acc.image = estimate;
  return acc;
}

std::vector<int> multiscale_more_stages(Index width, Index height, int cell) {
  std::vector<int> stages;
  for (int s : kScaleLadder) {
    const int root = root_of_scale(s);
    if (width % root != 0 || height % root != 0) continue;
    const Index w = width / root, h = height / root;
    if (w % cell == 0 && h % cell == 0 && w >= 3 && h >= 3) stages.push_back(s);
  }
  return stages;
}

std::map<int, HogDescriptor> multiscale_targets(const Image& original, const HogConfig& cfg) {
  std::map<int, HogDescriptor> out;
  for (int s : multiscale_more_stages(original.width, original.height, cfg.cell)) {
    out[s] = compute_hog(downsample_box(original, root_of_scale(s)), cfg);
  }
  return out;
}

Reconstruction reconstruct_multiscale_more(const ReconstructionProblem& p, const OptimizerConfig& opt) {
  const HogDescriptor& t = full_target(p);
  const int c = t.config.cell;
  const std::vector<int> stages = multiscale_more_stages(t.cells_x() * c, t.cells_y() * c, c);
  Reconstruction acc;
  Image estimate;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto it = p.targets.find(stages[i]);
    if (it == p.targets.end()) throw ConfigError("missing target for scale s=" + std::to_string(stages[i]));
    const HogDescriptor& st = it->second;
    if (st.config.cell != c || st.config.bins != t.config.bins || st.config.orientation != t.config.orientation) {
      throw ConfigError("per-scale targets must share cell size, bins and orientation");
    }
    const Index w = st.cells_x() * c, h = st.cells_y() * c;
    estimate = i == 0 ? initial_estimate(w, h, p.init, p.seed) : resize_image(estimate, w, h);
    estimate = run_stage(estimate, st, p.cfg, p.xi, opt, stages[i], acc).image;
  }
  acc.image = estimate;
  return acc;
}

Reconstruction reconstruct(const ReconstructionProblem& p, const OptimizerConfig& opt) {
  switch (p.schedule) {
    case Schedule::kMultiScale: return reconstruct_multiscale(p, opt);
    case Schedule::kMultiScaleMore: return reconstruct_multiscale_more(p, opt);
    case Schedule::kSingle: break;
  }
  return reconstruct_single(p, opt);
}

Image resize_image(const Image& img, Index width, Index height) {
  Tape tape;
  Image out(width, height, img.channels);
  for (Index c = 0; c < img.channels; ++c) {
    const Plane p = img.plane(c);
    const Var r = resize_bilinear(tape.constant(Tensor(Shape{img.height, img.width}, p.reshaped<Eigen::RowMajor>())),
                                  height, width);
    for (Index i = 0; i < r.value().size(); ++i) out.data[i * img.channels + c] = r.value()[i];
  }
  return out;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,stage,E,feature,smoothness\n";
  for (const TraceRow& r : trace) {
    os << r.iteration << ',' << r.stage << ',' << r.energy << ',' << r.feature << ',' << r.smoothness << '\n';
  }
  const std::string s = os.str();
  write_file_atomic(path, s.data(), s.size());
}

}  // namespace dhog
