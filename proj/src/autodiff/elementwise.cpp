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

#include <cmath>
#include <numbers>

namespace dhog {

using detail::accumulate;
using detail::operand;

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

Shape binary_shape(Var a, Var b, const char* op) {
  detail::require_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return sa;
  if (sb.size() == 1) return sa;
  if (sa.size() == 1) return sb;
  throw ShapeError(std::string(op) + ": shape mismatch " + sa.str() + " vs " + sb.str());
}

// Gives a broadcast tangent/adjoint operand the full length n.
Eigen::ArrayXd full(const Tensor& t, Index n) {
  if (t.size() == n) return t.array();
  return Eigen::ArrayXd::Constant(n, t.item());
}

}  // namespace

Var add(Var a, Var b) {
  const Shape shape = binary_shape(a, b, "add");
  const Index n = shape.size();
  Tensor out(shape);
  const auto A = operand(a.value(), n), B = operand(b.value(), n);
  for (Index i = 0; i < n; ++i) out[i] = A[i] + B[i];
  return a.tape().record(
      OpTag::kAdd, std::move(out), {a.id(), b.id()},
      [](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], self.adjoint.array());
        accumulate(t, self.parents[1], self.adjoint.array());
      },
      [](const Tape& t, const Node& self) {
        const Index n = self.value.size();
        return Tensor(self.value.shape(),
                      full(t.tangent(self.parents[0]), n) + full(t.tangent(self.parents[1]), n));
      });
}

Var sub(Var a, Var b) {
  const Shape shape = binary_shape(a, b, "sub");
  const Index n = shape.size();
  Tensor out(shape);
  const auto A = operand(a.value(), n), B = operand(b.value(), n);
  for (Index i = 0; i < n; ++i) out[i] = A[i] - B[i];
  return a.tape().record(
      OpTag::kSub, std::move(out), {a.id(), b.id()},
      [](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], self.adjoint.array());
        accumulate(t, self.parents[1], -self.adjoint.array());
      },
      [](const Tape& t, const Node& self) {
        const Index n = self.value.size();
        return Tensor(self.value.shape(),
                      full(t.tangent(self.parents[0]), n) - full(t.tangent(self.parents[1]), n));
      });
}

Var mul(Var a, Var b) {
  const Shape shape = binary_shape(a, b, "mul");
  const Index n = shape.size();
  Tensor out(shape);
  const auto A = operand(a.value(), n), B = operand(b.value(), n);
  for (Index i = 0; i < n; ++i) out[i] = A[i] * B[i];
  return a.tape().record(
      OpTag::kMul, std::move(out), {a.id(), b.id()},
      [](Tape& t, const Node& self) {
        const Index n = self.value.size();
        const Tensor& av = t.node(self.parents[0]).value;
        const Tensor& bv = t.node(self.parents[1]).value;
        if (t.needs_grad(self.parents[0])) accumulate(t, self.parents[0], self.adjoint.array() * full(bv, n));
        if (t.needs_grad(self.parents[1])) accumulate(t, self.parents[1], self.adjoint.array() * full(av, n));
      },
      [](const Tape& t, const Node& self) {
        const Index n = self.value.size();
        const Tensor& av = t.node(self.parents[0]).value;
        const Tensor& bv = t.node(self.parents[1]).value;
        return Tensor(self.value.shape(), full(t.tangent(self.parents[0]), n) * full(bv, n) +
                                              full(av, n) * full(t.tangent(self.parents[1]), n));
      });
}

Var div(Var a, Var b) {
  const Shape shape = binary_shape(a, b, "div");
  const Index n = shape.size();
  if ((b.value().array() == 0.0).any()) throw NumericError("div: zero denominator element");
  Tensor out(shape);
  const auto A = operand(a.value(), n), B = operand(b.value(), n);
  for (Index i = 0; i < n; ++i) out[i] = A[i] / B[i];
  return a.tape().record(
      OpTag::kDiv, std::move(out), {a.id(), b.id()},
      [](Tape& t, const Node& self) {
        const Index n = self.value.size();
        const Eigen::ArrayXd bv = full(t.node(self.parents[1]).value, n);
        if (t.needs_grad(self.parents[0])) accumulate(t, self.parents[0], self.adjoint.array() / bv);
        if (t.needs_grad(self.parents[1])) {
          accumulate(t, self.parents[1], -self.adjoint.array() * self.value.array() / bv);
        }
      },
      [](const Tape& t, const Node& self) {
        const Index n = self.value.size();
        const Eigen::ArrayXd bv = full(t.node(self.parents[1]).value, n);
        return Tensor(self.value.shape(), (full(t.tangent(self.parents[0]), n) -
                                           self.value.array() * full(t.tangent(self.parents[1]), n)) /
                                              bv);
      });
}

Var affine(Var a, double scale, double offset) {
  Tensor out(a.shape(), Eigen::ArrayXd(a.value().array() * scale + offset));
  return a.tape().record(
      OpTag::kAffine, std::move(out), {a.id()},
      [scale](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], self.adjoint.array() * scale);
      },
      [scale](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(), Eigen::ArrayXd(t.tangent(self.parents[0]).array() * scale));
      });
}

Var pow2(Var a) {
  Tensor out(a.shape(), Eigen::ArrayXd(a.value().array().square()));
  return a.tape().record(
      OpTag::kPow2, std::move(out), {a.id()},
      [](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], 2.0 * t.node(self.parents[0]).value.array() * self.adjoint.array());
      },
      [](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(), Eigen::ArrayXd(2.0 * t.node(self.parents[0]).value.array() *
                                                         t.tangent(self.parents[0]).array()));
      });
}

namespace {

// d sqrt(x) = 1 / (2 sqrt(x)); a zero root contributes nothing.
Eigen::ArrayXd sqrt_slope(const Tensor& root) {
  return (root.array() > 0.0).select(0.5 / root.array(), 0.0);
}

}  // namespace

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw NumericError("sqrt of a negative element");
  Tensor out(a.shape(), Eigen::ArrayXd(a.value().array().sqrt()));
  return a.tape().record(
      OpTag::kSqrt, std::move(out), {a.id()},
      [](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], sqrt_slope(self.value) * self.adjoint.array());
      },
      [](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(),
                      Eigen::ArrayXd(sqrt_slope(self.value) * t.tangent(self.parents[0]).array()));
      });
}

Var abs(Var a) {
  const Tensor& x = a.value();
  Tensor out(a.shape(), Eigen::ArrayXd(x.array().abs()));
  if (a.tape().tracking_branches()) {
    for (Index i = 0; i < x.size(); ++i) a.tape().note_branch(x[i] > 0.0 ? 1 : (x[i] < 0.0 ? 2 : 0));
  }
  // sign(0) = 0
  auto sign = [](const Tensor& v) {
    return Eigen::ArrayXd((v.array() > 0.0).cast<double>() - (v.array() < 0.0).cast<double>());
  };
  return a.tape().record(
      OpTag::kAbs, std::move(out), {a.id()},
      [sign](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], sign(t.node(self.parents[0]).value) * self.adjoint.array());
      },
      [sign](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(),
                      Eigen::ArrayXd(sign(t.node(self.parents[0]).value) * t.tangent(self.parents[0]).array()));
      });
}

Var smooth_abs(Var a, double delta) {
  const Tensor& x = a.value();
  Tensor out(a.shape(), Eigen::ArrayXd((x.array().square() + delta * delta).sqrt()));
  if (a.tape().tracking_branches()) {
    for (Index i = 0; i < x.size(); ++i) a.tape().note_branch(x[i] > 0.0 ? 1 : (x[i] < 0.0 ? 2 : 0));
  }
  // d/dx = x / value; value > 0 unless delta = 0 and x = 0, where the slope is taken as 0.
  auto slope = [](const Tensor& x, const Tensor& v) {
    return Eigen::ArrayXd((v.array() > 0.0).select(x.array() / v.array(), 0.0));
  };
  return a.tape().record(
      OpTag::kSmoothAbs, std::move(out), {a.id()},
      [slope](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], slope(t.node(self.parents[0]).value, self.value) * self.adjoint.array());
      },
      [slope](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(),
                      Eigen::ArrayXd(slope(t.node(self.parents[0]).value, self.value) * t.tangent(self.parents[0]).array()));
      });
}

Var clip(Var a, double lo, double hi) {
  if (!(lo < hi)) throw ShapeError("clip: need lo < hi");
  const Tensor& x = a.value();
  Tensor out(a.shape(), Eigen::ArrayXd(x.array().max(lo).min(hi)));
  if (a.tape().tracking_branches()) {
    for (Index i = 0; i < x.size(); ++i) a.tape().note_branch(x[i] <= lo ? 0 : (x[i] >= hi ? 2 : 1));
  }
  auto inside = [lo, hi](const Tensor& v) {
    return Eigen::ArrayXd(((v.array() > lo) && (v.array() < hi)).cast<double>());
  };
  return a.tape().record(
      OpTag::kClip, std::move(out), {a.id()},
      [inside](Tape& t, const Node& self) {
        accumulate(t, self.parents[0], inside(t.node(self.parents[0]).value) * self.adjoint.array());
      },
      [inside](const Tape& t, const Node& self) {
        return Tensor(self.value.shape(),
                      Eigen::ArrayXd(inside(t.node(self.parents[0]).value) * t.tangent(self.parents[0]).array()));
      });
}

Var wrap(Var a, double period) {
  if (!(period > 0.0)) throw ShapeError("wrap: period must be positive");
  const Tensor& x = a.value();
  Tensor out(a.shape());
  const bool track = a.tape().tracking_branches();
  for (Index i = 0; i < x.size(); ++i) {
    const double k = std::floor(x[i] / period);
    double w = x[i] - period * k;
    // Rounding can land exactly on the period for tiny negative inputs.
    if (w >= period) w -= period;
    out[i] = w;
    if (track) a.tape().note_branch(static_cast<std::uint64_t>(static_cast<std::int64_t>(k)));
  }
  return a.tape().record(
      OpTag::kWrap, std::move(out), {a.id()},
      [](Tape& t, const Node& self) { accumulate(t, self.parents[0], self.adjoint.array()); },
      [](const Tape& t, const Node& self) { return t.tangent(self.parents[0]); });
}

Var atan2(Var y, Var x) {
  detail::require_same_tape(y, x);
  if (y.shape() != x.shape()) throw ShapeError("atan2: shape mismatch " + y.shape().str() + " vs " + x.shape().str());
  const Tensor& yv = y.value();
  const Tensor& xv = x.value();
  Tensor out(y.shape());
  const bool track = y.tape().tracking_branches();
  for (Index i = 0; i < yv.size(); ++i) {
    if (yv[i] == 0.0 && xv[i] == 0.0) {
      out[i] = 0.0;
    } else {
      double deg = std::atan2(yv[i], xv[i]) * kDegPerRad;
      if (deg <= -180.0) deg = 180.0;
      out[i] = deg;
    }
    // The cut along the negative x axis is a discontinuity.
    if (track) y.tape().note_branch(xv[i] < 0.0 ? (yv[i] >= 0.0 ? 1 : 2) : 0);
  }
  // Partial derivatives scaled to degrees; zero at the origin.
  auto partials = [](const Tensor& yv, const Tensor& xv) {
    Eigen::ArrayXd r2 = yv.array().square() + xv.array().square();
    Eigen::ArrayXd inv = (r2 > 0.0).select(kDegPerRad / r2, 0.0);
    return std::pair<Eigen::ArrayXd, Eigen::ArrayXd>(xv.array() * inv, -yv.array() * inv);
  };
  return y.tape().record(
      OpTag::kAtan2, std::move(out), {y.id(), x.id()},
      [partials](Tape& t, const Node& self) {
        auto [dy, dx] = partials(t.node(self.parents[0]).value, t.node(self.parents[1]).value);
        accumulate(t, self.parents[0], dy * self.adjoint.array());
        accumulate(t, self.parents[1], dx * self.adjoint.array());
      },
      [partials](const Tape& t, const Node& self) {
        auto [dy, dx] = partials(t.node(self.parents[0]).value, t.node(self.parents[1]).value);
        return Tensor(self.value.shape(), Eigen::ArrayXd(dy * t.tangent(self.parents[0]).array() +
                                                         dx * t.tangent(self.parents[1]).array()));
      });
}

}  // namespace dhog
