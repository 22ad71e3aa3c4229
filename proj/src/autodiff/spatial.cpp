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

#include "autodiff/op_support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace dhog {

using detail::accumulate;

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_indices(std::span<const Index> idx, Index n, const char* what) {
  if (idx.empty()) throw ShapeError(std::string("empty ") + what + " index list");
  for (Index r : idx) {
    if (r < 0 || r >= n) throw ShapeError(std::string(what) + " index " + std::to_string(r) + " out of range");
  }
}

// out(i, j) = sum_v w[v] * in(i, j + v - anchor), zero padded.
void correlate_along_rows(const double* in, double* out, Index rows, Index cols,
                          const std::vector<double>& w, Index anchor) {
  const auto k = static_cast<Index>(w.size());
  for (Index i = 0; i < rows; ++i) {
    const double* src = in + i * cols;
    double* dst = out + i * cols;
    for (Index j = 0; j < cols; ++j) {
      const Index v_lo = std::max<Index>(0, anchor - j);
      const Index v_hi = std::min<Index>(k, cols - j + anchor);
      double s = 0.0;
      for (Index v = v_lo; v < v_hi; ++v) s += w[static_cast<std::size_t>(v)] * src[j + v - anchor];
      dst[j] = s;
    }
  }
}

// Transpose of correlate_along_rows: accumulates into `in_adj`.
void scatter_along_rows(const double* out_adj, double* in_adj, Index rows, Index cols,
                        const std::vector<double>& w, Index anchor) {
  const auto k = static_cast<Index>(w.size());
  for (Index i = 0; i < rows; ++i) {
    const double* src = out_adj + i * cols;
    double* dst = in_adj + i * cols;
    for (Index j = 0; j < cols; ++j) {
      const double g = src[j];
      if (g == 0.0) continue;
      const Index v_lo = std::max<Index>(0, anchor - j);
      const Index v_hi = std::min<Index>(k, cols - j + anchor);
      for (Index v = v_lo; v < v_hi; ++v) dst[j + v - anchor] += w[static_cast<std::size_t>(v)] * g;
    }
  }
}

// out(i, j) = sum_u w[u] * in(i + u - anchor, j), zero padded.
void correlate_along_cols(const double* in, double* out, Index rows, Index cols,
                          const std::vector<double>& w, Index anchor) {
  const auto k = static_cast<Index>(w.size());
  std::fill(out, out + rows * cols, 0.0);
  for (Index i = 0; i < rows; ++i) {
    const Index u_lo = std::max<Index>(0, anchor - i);
    const Index u_hi = std::min<Index>(k, rows - i + anchor);
    double* dst = out + i * cols;
    for (Index u = u_lo; u < u_hi; ++u) {
      const double wu = w[static_cast<std::size_t>(u)];
      const double* src = in + (i + u - anchor) * cols;
      for (Index j = 0; j < cols; ++j) dst[j] += wu * src[j];
    }
  }
}

void scatter_along_cols(const double* out_adj, double* in_adj, Index rows, Index cols,
                        const std::vector<double>& w, Index anchor) {
  const auto k = static_cast<Index>(w.size());
  for (Index i = 0; i < rows; ++i) {
    const Index u_lo = std::max<Index>(0, anchor - i);
    const Index u_hi = std::min<Index>(k, rows - i + anchor);
    const double* src = out_adj + i * cols;
    for (Index u = u_lo; u < u_hi; ++u) {
      const double wu = w[static_cast<std::size_t>(u)];
      double* dst = in_adj + (i + u - anchor) * cols;
      for (Index j = 0; j < cols; ++j) dst[j] += wu * src[j];
    }
  }
}

// Maps an out-of-range tap to its source index, or -1 for a zero tap.
Index pad_index(Index i, Index n, Padding padding) {
  if (i >= 0 && i < n) return i;
  return padding == Padding::kReplicate ? std::clamp<Index>(i, 0, n - 1) : -1;
}

Tensor convolve(const Tensor& a, const Kernel& k, Padding padding) {
  const Index rows = a.rows(), cols = a.cols();
  Tensor out(a.shape());
  if (k.is_separable() && padding == Padding::kZero) {
    Tensor tmp(a.shape());
    correlate_along_rows(a.data(), tmp.data(), rows, cols, k.row_factor(), k.anchor_col());
    correlate_along_cols(tmp.data(), out.data(), rows, cols, k.column_factor(), k.anchor_row());
    return out;
  }
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      double s = 0.0;
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = pad_index(i + u - k.anchor_row(), rows, padding);
        if (r < 0) continue;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = pad_index(j + v - k.anchor_col(), cols, padding);
          if (c < 0) continue;
          s += k(u, v) * a(r, c);
        }
      }
      out(i, j) = s;
    }
  }
  return out;
}

void convolve_adjoint(const Tensor& out_adj, const Kernel& k, Padding padding, Tensor& in_adj) {
  const Index rows = out_adj.rows(), cols = out_adj.cols();
  if (k.is_separable() && padding == Padding::kZero) {
    Tensor tmp(out_adj.shape());
    scatter_along_cols(out_adj.data(), tmp.data(), rows, cols, k.column_factor(), k.anchor_row());
    scatter_along_rows(tmp.data(), in_adj.data(), rows, cols, k.row_factor(), k.anchor_col());
    return;
  }
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double g = out_adj(i, j);
      if (g == 0.0) continue;
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = pad_index(i + u - k.anchor_row(), rows, padding);
        if (r < 0) continue;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = pad_index(j + v - k.anchor_col(), cols, padding);
          if (c < 0) continue;
          in_adj(r, c) += k(u, v) * g;
        }
      }
    }
  }
}

}  // namespace

Var conv2d_same(Var a, const Kernel& k, Padding padding) {
  detail::require_2d(a, "conv2d_same");
  if (k.rows() > 2 * a.shape()[0] || k.cols() > 2 * a.shape()[1]) {
    throw ShapeError("conv2d_same: kernel larger than twice the input extent");
  }
  auto kernel = std::make_shared<const Kernel>(k);
  return a.tape().record(
      OpTag::kConv2d, convolve(a.value(), k, padding), {a.id()},
      [kernel, padding](Tape& t, const Node& self) {
        if (!t.needs_grad(self.parents[0])) return;
        convolve_adjoint(self.adjoint, *kernel, padding, t.adjoint_slot(self.parents[0]));
      },
      [kernel, padding](const Tape& t, const Node& self) {
        return convolve(t.tangent(self.parents[0]), *kernel, padding);
      });
}

Var subsample(Var a, std::span<const Index> rows, std::span<const Index> cols) {
  detail::require_2d(a, "subsample");
  check_indices(rows, a.shape()[0], "row");
  check_indices(cols, a.shape()[1], "column");
  auto ri = std::make_shared<const std::vector<Index>>(rows.begin(), rows.end());
  auto ci = std::make_shared<const std::vector<Index>>(cols.begin(), cols.end());
  auto gather = [ri, ci](const Tensor& src) {
    Tensor out(Shape{static_cast<Index>(ri->size()), static_cast<Index>(ci->size())});
    for (std::size_t i = 0; i < ri->size(); ++i) {
      for (std::size_t j = 0; j < ci->size(); ++j) {
        out(static_cast<Index>(i), static_cast<Index>(j)) = src((*ri)[i], (*ci)[j]);
      }
    }
    return out;
  };
  return a.tape().record(
      OpTag::kSubsample, gather(a.value()), {a.id()},
      [ri, ci](Tape& t, const Node& self) {
        if (!t.needs_grad(self.parents[0])) return;
        Tensor& dst = t.adjoint_slot(self.parents[0]);
        for (std::size_t i = 0; i < ri->size(); ++i) {
          for (std::size_t j = 0; j < ci->size(); ++j) {
            dst((*ri)[i], (*ci)[j]) += self.adjoint(static_cast<Index>(i), static_cast<Index>(j));
          }
        }
      },
      [gather](const Tape& t, const Node& self) { return gather(t.tangent(self.parents[0])); });
}

namespace {

struct SampledConv {
  Kernel kernel;
  std::vector<Index> rows, cols;
  Index in_rows, in_cols;
};

Tensor sampled_convolve(const Tensor& a, const SampledConv& sc) {
  const Kernel& k = sc.kernel;
  const auto nr = static_cast<Index>(sc.rows.size()), nc = static_cast<Index>(sc.cols.size());
  Tensor out(Shape{nr, nc});
  if (k.is_separable()) {
    const auto& rf = k.row_factor();
    const auto& cf = k.column_factor();
    // Horizontal pass only at the sampled columns, for every input row.
    Plane tmp = Plane::Zero(sc.in_rows, nc);
    for (Index r = 0; r < sc.in_rows; ++r) {
      for (Index j = 0; j < nc; ++j) {
        double s = 0.0;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = sc.cols[static_cast<std::size_t>(j)] + v - k.anchor_col();
          if (c >= 0 && c < sc.in_cols) s += rf[static_cast<std::size_t>(v)] * a(r, c);
        }
        tmp(r, j) = s;
      }
    }
    for (Index i = 0; i < nr; ++i) {
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = sc.rows[static_cast<std::size_t>(i)] + u - k.anchor_row();
        if (r < 0 || r >= sc.in_rows) continue;
        const double w = cf[static_cast<std::size_t>(u)];
        for (Index j = 0; j < nc; ++j) out(i, j) += w * tmp(r, j);
      }
    }
    return out;
  }
  for (Index i = 0; i < nr; ++i) {
    for (Index j = 0; j < nc; ++j) {
      double s = 0.0;
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = sc.rows[static_cast<std::size_t>(i)] + u - k.anchor_row();
        if (r < 0 || r >= sc.in_rows) continue;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = sc.cols[static_cast<std::size_t>(j)] + v - k.anchor_col();
          if (c >= 0 && c < sc.in_cols) s += k(u, v) * a(r, c);
        }
      }
      out(i, j) = s;
    }
  }
  return out;
}

void sampled_convolve_adjoint(const Tensor& out_adj, const SampledConv& sc, Tensor& in_adj) {
  const Kernel& k = sc.kernel;
  const auto nr = static_cast<Index>(sc.rows.size()), nc = static_cast<Index>(sc.cols.size());
  if (k.is_separable()) {
    const auto& rf = k.row_factor();
    const auto& cf = k.column_factor();
    Plane tmp = Plane::Zero(sc.in_rows, nc);
    for (Index i = 0; i < nr; ++i) {
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = sc.rows[static_cast<std::size_t>(i)] + u - k.anchor_row();
        if (r < 0 || r >= sc.in_rows) continue;
        const double w = cf[static_cast<std::size_t>(u)];
        for (Index j = 0; j < nc; ++j) tmp(r, j) += w * out_adj(i, j);
      }
    }
    for (Index r = 0; r < sc.in_rows; ++r) {
      for (Index j = 0; j < nc; ++j) {
        const double g = tmp(r, j);
        if (g == 0.0) continue;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = sc.cols[static_cast<std::size_t>(j)] + v - k.anchor_col();
          if (c >= 0 && c < sc.in_cols) in_adj(r, c) += rf[static_cast<std::size_t>(v)] * g;
        }
      }
    }
    return;
  }
  for (Index i = 0; i < nr; ++i) {
    for (Index j = 0; j < nc; ++j) {
      const double g = out_adj(i, j);
      for (Index u = 0; u < k.rows(); ++u) {
        const Index r = sc.rows[static_cast<std::size_t>(i)] + u - k.anchor_row();
        if (r < 0 || r >= sc.in_rows) continue;
        for (Index v = 0; v < k.cols(); ++v) {
          const Index c = sc.cols[static_cast<std::size_t>(j)] + v - k.anchor_col();
          if (c >= 0 && c < sc.in_cols) in_adj(r, c) += k(u, v) * g;
        }
      }
    }
  }
}

}  // namespace

Var conv2d_subsample(Var a, const Kernel& k, std::span<const Index> rows, std::span<const Index> cols) {
  detail::require_2d(a, "conv2d_subsample");
  if (k.rows() > 2 * a.shape()[0] || k.cols() > 2 * a.shape()[1]) {
    throw ShapeError("conv2d_subsample: kernel larger than twice the input extent");
  }
  check_indices(rows, a.shape()[0], "row");
  check_indices(cols, a.shape()[1], "column");
  auto sc = std::make_shared<const SampledConv>(SampledConv{
      k, {rows.begin(), rows.end()}, {cols.begin(), cols.end()}, a.shape()[0], a.shape()[1]});
  return a.tape().record(
      OpTag::kConvSubsample, sampled_convolve(a.value(), *sc), {a.id()},
      [sc](Tape& t, const Node& self) {
        if (!t.needs_grad(self.parents[0])) return;
        sampled_convolve_adjoint(self.adjoint, *sc, t.adjoint_slot(self.parents[0]));
      },
      [sc](const Tape& t, const Node& self) { return sampled_convolve(t.tangent(self.parents[0]), *sc); });
}

namespace {

struct Axis {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

// Center-aligned source coordinates for resampling `in` samples to `out`.
Axis resample_axis(Index in, Index out) {
  Axis ax;
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<Index>(std::floor(s));
    ax.lo.push_back(lo);
    ax.hi.push_back(std::min(lo + 1, in - 1));
    ax.frac.push_back(s - static_cast<double>(lo));
  }
  return ax;
}

}  // namespace

Var resize_bilinear(Var a, Index rows, Index cols) {
  detail::require_2d(a, "resize_bilinear");
  if (rows < 1 || cols < 1) throw ShapeError("resize_bilinear: extents must be >= 1");
  auto ay = std::make_shared<const Axis>(resample_axis(a.shape()[0], rows));
  auto ax = std::make_shared<const Axis>(resample_axis(a.shape()[1], cols));
  auto apply = [ay, ax, rows, cols](const Tensor& src) {
    Tensor out(Shape{rows, cols});
    for (Index i = 0; i < rows; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double fy = ay->frac[ui];
      for (Index j = 0; j < cols; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const double fx = ax->frac[uj];
        const double top = (1.0 - fx) * src(ay->lo[ui], ax->lo[uj]) + fx * src(ay->lo[ui], ax->hi[uj]);
        const double bot = (1.0 - fx) * src(ay->hi[ui], ax->lo[uj]) + fx * src(ay->hi[ui], ax->hi[uj]);
        out(i, j) = (1.0 - fy) * top + fy * bot;
      }
    }
    return out;
  };
  return a.tape().record(
      OpTag::kResize, apply(a.value()), {a.id()},
      [ay, ax, rows, cols](Tape& t, const Node& self) {
        if (!t.needs_grad(self.parents[0])) return;
        Tensor& dst = t.adjoint_slot(self.parents[0]);
        for (Index i = 0; i < rows; ++i) {
          const auto ui = static_cast<std::size_t>(i);
          const double fy = ay->frac[ui];
          for (Index j = 0; j < cols; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            const double fx = ax->frac[uj];
            const double g = self.adjoint(i, j);
            dst(ay->lo[ui], ax->lo[uj]) += (1.0 - fy) * (1.0 - fx) * g;
            dst(ay->lo[ui], ax->hi[uj]) += (1.0 - fy) * fx * g;
            dst(ay->hi[ui], ax->lo[uj]) += fy * (1.0 - fx) * g;
            dst(ay->hi[ui], ax->hi[uj]) += fy * fx * g;
          }
        }
      },
      [apply](const Tape& t, const Node& self) { return apply(t.tangent(self.parents[0])); });
}

namespace {

// Per-output-pixel sampling geometry of a warp.
struct WarpSample {
  Index x0, y0;
  double fx, fy;
  double px, py;      // template-centered source coordinates
  double dvdx, dvdy;  // spatial derivative of the sampled value
};

struct WarpGeometry {
  Index rows, cols, in_rows, in_cols;
  double cos_t, sin_t, inv_scale;
  std::vector<WarpSample> samples;
};

double tap(const Tensor& img, Index y, Index x) {
  if (y < 0 || x < 0 || y >= img.rows() || x >= img.cols()) return 0.0;
  return img(y, x);
}

void add_tap(Tensor& img, Index y, Index x, double v) {
  if (y < 0 || x < 0 || y >= img.rows() || x >= img.cols()) return;
  img(y, x) += v;
}

double sample(const Tensor& img, const WarpSample& s) {
  return (1.0 - s.fy) * ((1.0 - s.fx) * tap(img, s.y0, s.x0) + s.fx * tap(img, s.y0, s.x0 + 1)) +
         s.fy * ((1.0 - s.fx) * tap(img, s.y0 + 1, s.x0) + s.fx * tap(img, s.y0 + 1, s.x0 + 1));
}

// d(sample coordinate)/d(pose) for one pixel, in order tx, ty, r, sigma.
std::array<std::pair<double, double>, 4> coordinate_partials(const WarpGeometry& g, const WarpSample& s) {
  constexpr double kRadPerDeg = std::numbers::pi / 180.0;
  return {{{-g.cos_t * g.inv_scale, g.sin_t * g.inv_scale},
           {-g.sin_t * g.inv_scale, -g.cos_t * g.inv_scale},
           {s.py * kRadPerDeg, -s.px * kRadPerDeg},
           {-s.px, -s.py}}};
}

}  // namespace

Var warp_bilinear(Var a, const PoseVars& pose, Index rows, Index cols) {
  detail::require_2d(a, "warp_bilinear");
  if (rows < 1 || cols < 1) throw ShapeError("warp_bilinear: extents must be >= 1");
  for (const Var& p : {pose.tx, pose.ty, pose.r, pose.sigma}) {
    detail::require_same_tape(a, p);
    if (p.value().size() != 1) throw ShapeError("warp_bilinear: pose parameters must be scalars");
  }
  const Tensor& img = a.value();
  auto geo = std::make_shared<WarpGeometry>();
  geo->rows = rows;
  geo->cols = cols;
  geo->in_rows = img.rows();
  geo->in_cols = img.cols();
  // Reducing the angle first makes r and r + 360 produce identical samples.
  const double theta = std::fmod(pose.r.item(), 360.0) * std::numbers::pi / 180.0;
  geo->cos_t = std::cos(theta);
  geo->sin_t = std::sin(theta);
  geo->inv_scale = std::exp(-pose.sigma.item());
  const double tx = pose.tx.item(), ty = pose.ty.item();
  const double out_cx = 0.5 * static_cast<double>(cols), out_cy = 0.5 * static_cast<double>(rows);
  const double in_cx = 0.5 * static_cast<double>(img.cols()), in_cy = 0.5 * static_cast<double>(img.rows());
  geo->samples.resize(static_cast<std::size_t>(rows * cols));
  Tensor out(Shape{rows, cols});
  const bool track = a.tape().tracking_branches();
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      WarpSample& s = geo->samples[static_cast<std::size_t>(i * cols + j)];
      const double qx = static_cast<double>(j) + 0.5 - out_cx - tx;
      const double qy = static_cast<double>(i) + 0.5 - out_cy - ty;
      s.px = (geo->cos_t * qx + geo->sin_t * qy) * geo->inv_scale;
      s.py = (-geo->sin_t * qx + geo->cos_t * qy) * geo->inv_scale;
      const double x = s.px + in_cx - 0.5;
      const double y = s.py + in_cy - 0.5;
      const double fx0 = std::floor(x), fy0 = std::floor(y);
      s.x0 = static_cast<Index>(fx0);
      s.y0 = static_cast<Index>(fy0);
      s.fx = x - fx0;
      s.fy = y - fy0;
      const double a00 = tap(img, s.y0, s.x0), a01 = tap(img, s.y0, s.x0 + 1);
      const double a10 = tap(img, s.y0 + 1, s.x0), a11 = tap(img, s.y0 + 1, s.x0 + 1);
      s.dvdx = (1.0 - s.fy) * (a01 - a00) + s.fy * (a11 - a10);
      s.dvdy = (1.0 - s.fx) * (a10 - a00) + s.fx * (a11 - a01);
      out(i, j) = sample(img, s);
      if (track) {
        a.tape().note_branch(static_cast<std::uint64_t>(s.x0));
        a.tape().note_branch(static_cast<std::uint64_t>(s.y0));
      }
    }
  }
  return a.tape().record(
      OpTag::kWarp, std::move(out), {a.id(), pose.tx.id(), pose.ty.id(), pose.r.id(), pose.sigma.id()},
      [geo](Tape& t, const Node& self) {
        if (t.needs_grad(self.parents[0])) {
          Tensor& dst = t.adjoint_slot(self.parents[0]);
          for (std::size_t k = 0; k < geo->samples.size(); ++k) {
            const WarpSample& s = geo->samples[k];
            const double g = self.adjoint[static_cast<Index>(k)];
            add_tap(dst, s.y0, s.x0, (1.0 - s.fy) * (1.0 - s.fx) * g);
            add_tap(dst, s.y0, s.x0 + 1, (1.0 - s.fy) * s.fx * g);
            add_tap(dst, s.y0 + 1, s.x0, s.fy * (1.0 - s.fx) * g);
            add_tap(dst, s.y0 + 1, s.x0 + 1, s.fy * s.fx * g);
          }
        }
        std::array<double, 4> pose_adj{};
        for (std::size_t k = 0; k < geo->samples.size(); ++k) {
          const WarpSample& s = geo->samples[k];
          const double g = self.adjoint[static_cast<Index>(k)];
          if (g == 0.0) continue;
          const auto partials = coordinate_partials(*geo, s);
          for (std::size_t p = 0; p < 4; ++p) {
            pose_adj[p] += g * (s.dvdx * partials[p].first + s.dvdy * partials[p].second);
          }
        }
        for (std::size_t p = 0; p < 4; ++p) {
          if (t.needs_grad(self.parents[p + 1])) t.adjoint_slot(self.parents[p + 1])[0] += pose_adj[p];
        }
      },
      [geo](const Tape& t, const Node& self) {
        const Tensor& timg = t.tangent(self.parents[0]);
        std::array<double, 4> tp{};
        for (std::size_t p = 0; p < 4; ++p) tp[p] = t.tangent(self.parents[p + 1]).item();
        Tensor out(self.value.shape());
        for (std::size_t k = 0; k < geo->samples.size(); ++k) {
          const WarpSample& s = geo->samples[k];
          const auto partials = coordinate_partials(*geo, s);
          double dx = 0.0, dy = 0.0;
          for (std::size_t p = 0; p < 4; ++p) {
            dx += partials[p].first * tp[p];
            dy += partials[p].second * tp[p];
          }
          out[static_cast<Index>(k)] = sample(timg, s) + s.dvdx * dx + s.dvdy * dy;
        }
        return out;
      });
}

Var channel(Var a, Index k) {
  if (a.shape().rank() != 3) throw ShapeError("channel: needs a 3D input, got " + a.shape().str());
  const Index depth = a.shape()[2];
  if (k < 0 || k >= depth) throw ShapeError("channel: index out of range");
  const Index n = a.shape()[0] * a.shape()[1];
  auto pick = [k, depth, n, shape = Shape{a.shape()[0], a.shape()[1]}](const Tensor& src) {
    Tensor out(shape);
    for (Index i = 0; i < n; ++i) out[i] = src[i * depth + k];
    return out;
  };
  return a.tape().record(
      OpTag::kChannel, pick(a.value()), {a.id()},
      [k, depth, n](Tape& t, const Node& self) {
        if (!t.needs_grad(self.parents[0])) return;
        Tensor& dst = t.adjoint_slot(self.parents[0]);
        for (Index i = 0; i < n; ++i) dst[i * depth + k] += self.adjoint[i];
      },
      [pick](const Tape& t, const Node& self) { return pick(t.tangent(self.parents[0])); });
}

Var stack(std::span<const Var> planes) {
  if (planes.empty()) throw ShapeError("stack: no planes");
  const Shape plane_shape = planes[0].shape();
  if (plane_shape.rank() != 2) throw ShapeError("stack: planes must be 2D");
  std::vector<std::size_t> ids;
  for (const Var& p : planes) {
    detail::require_same_tape(planes[0], p);
    if (p.shape() != plane_shape) throw ShapeError("stack: plane shapes differ");
    ids.push_back(p.id());
  }
  const auto depth = static_cast<Index>(planes.size());
  const Index n = plane_shape.size();
  const Shape shape{plane_shape[0], plane_shape[1], depth};
  auto interleave = [shape, n, depth](auto&& plane_at) {
    Tensor out(shape);
    for (Index b = 0; b < depth; ++b) {
      const Tensor& src = plane_at(b);
      for (Index i = 0; i < n; ++i) out[i * depth + b] = src[i];
    }
    return out;
  };
  Tensor value = interleave([&](Index b) -> const Tensor& { return planes[static_cast<std::size_t>(b)].value(); });
  return planes[0].tape().record(
      OpTag::kStack, std::move(value), std::move(ids),
      [n, depth](Tape& t, const Node& self) {
        for (Index b = 0; b < depth; ++b) {
          const std::size_t pid = self.parents[static_cast<std::size_t>(b)];
          if (!t.needs_grad(pid)) continue;
          Tensor& dst = t.adjoint_slot(pid);
          for (Index i = 0; i < n; ++i) dst[i] += self.adjoint[i * depth + b];
        }
      },
      [interleave](const Tape& t, const Node& self) {
        return interleave([&](Index b) -> const Tensor& { return t.tangent(self.parents[static_cast<std::size_t>(b)]); });
      });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::vector<std::size_t> ids;
  Index total = 0;
  for (const Var& p : parts) {
    detail::require_same_tape(parts[0], p);
    ids.push_back(p.id());
    total += p.value().size();
  }
  Eigen::ArrayXd data(total);
  Index offset = 0;
  for (const Var& p : parts) {
    data.segment(offset, p.value().size()) = p.value().array();
    offset += p.value().size();
  }
  return parts[0].tape().record(
      OpTag::kConcat, Tensor(Shape{total}, std::move(data)), std::move(ids),
      [](Tape& t, const Node& self) {
        Index off = 0;
        for (std::size_t pid : self.parents) {
          const Index len = t.node(pid).value.size();
          if (t.needs_grad(pid)) t.adjoint_slot(pid).array() += self.adjoint.array().segment(off, len);
          off += len;
        }
      },
      [](const Tape& t, const Node& self) {
        Eigen::ArrayXd out(self.value.size());
        Index off = 0;
        for (std::size_t pid : self.parents) {
          const Tensor& tan = t.tangent(pid);
          out.segment(off, tan.size()) = tan.array();
          off += tan.size();
        }
        return Tensor(self.value.shape(), std::move(out));
      });
}

}  // namespace dhog
