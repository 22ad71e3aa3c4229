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

#pragma once

#include "dhog/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace dhog {

class Tape;

enum class OpTag : std::uint8_t {
  kVariable,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAffine,
  kPow2,
  kSqrt,
  kAbs,
  kSmoothAbs,
  kClip,
  kWrap,
  kAtan2,
  kConv2d,
  kSubsample,
  kConvSubsample,
  kResize,
  kWarp,
  kChannel,
  kStack,
  kConcat,
  kSum,
  kDot,
  kL2Norm,
  kCorrupt,
};

const char* op_name(OpTag tag);

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Node {
  using BackwardFn = std::function<void(Tape&, const Node&)>;
  using TangentFn = std::function<Tensor(const Tape&, const Node&)>;

  OpTag op = OpTag::kConstant;
  Tensor value;
  std::vector<std::size_t> parents;
  bool requires_grad = false;
  BackwardFn backward;
  TangentFn tangent_fn;

  Tensor adjoint;
  bool has_adjoint = false;
  Tensor tangent;
  bool has_tangent = false;
};

/// Reverse-mode recording of one computation. Nodes are appended in
/// evaluation order, so the node vector is already a topological order and
/// the backward sweep simply walks it in reverse.
///
/// A tape is single-threaded. Build a fresh one per objective evaluation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value);
  Var constant(Tensor value);
  Var scalar_variable(double v) { return variable(Tensor::scalar(v)); }
  Var scalar_constant(double v) { return constant(Tensor::scalar(v)); }

  /// Seeds d(seed)/d(seed) = 1 and populates adjoints of every ancestor.
  /// Adjoints from a previous call are cleared first.
  void backward(Var seed);

  /// Vector-Jacobian product: seeds `output` with `seed` instead of 1.
  void backward(Var output, const Tensor& seed);

  /// Jacobian-vector product: propagates tangents from the given inputs
  /// (all other variables have zero tangent) to every downstream node.
  void push_forward(std::span<const std::pair<Var, Tensor>> seeds);

  /// Adjoint of a node after backward(); zeros if the node received none.
  Tensor grad(Var v) const;
  /// Tangent of a node after push_forward(); zeros if none.
  Tensor tangent_of(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Branch tracking: piecewise ops fold their active piece per element into
  // a running hash so callers can tell whether two evaluations took the same
  // pieces. Off by default.
  void set_track_branches(bool on) { track_branches_ = on; }
  bool tracking_branches() const { return track_branches_; }
  void note_branch(std::uint64_t code);
  std::uint64_t branch_signature() const { return branch_hash_; }

  // Used by operation implementations.
  Var record(OpTag op, Tensor value, std::vector<std::size_t> parents, Node::BackwardFn backward,
             Node::TangentFn tangent_fn);
  Tensor& adjoint_slot(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& tangent(std::size_t id) const;

 private:
  void clear_adjoints();
  void run_backward(std::size_t from);

  std::vector<Node> nodes_;
  bool track_branches_ = false;
  std::uint64_t branch_hash_ = 1469598103934665603ULL;
  mutable std::deque<Tensor> zero_cache_;
};

/// Fixed (non-differentiated) 2D correlation kernel. Even extents anchor at
/// (ceil(kh/2)-1, ceil(kw/2)-1).
class Kernel {
 public:
  Kernel(Index rows, Index cols, std::vector<double> weights);
  /// Outer product column_factor * row_factor^T; convolved as two 1D passes.
  static Kernel separable(std::vector<double> column_factor, std::vector<double> row_factor);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index anchor_row() const { return (rows_ + 1) / 2 - 1; }
  Index anchor_col() const { return (cols_ + 1) / 2 - 1; }
  double operator()(Index r, Index c) const { return weights_[static_cast<std::size_t>(r * cols_ + c)]; }
  double sum() const;

  bool is_separable() const { return !column_factor_.empty(); }
  const std::vector<double>& column_factor() const { return column_factor_; }
  const std::vector<double>& row_factor() const { return row_factor_; }

 private:
  Index rows_;
  Index cols_;
  std::vector<double> weights_;
  std::vector<double> column_factor_;
  std::vector<double> row_factor_;
};

/// The four scalar pose nodes consumed by warp_bilinear.
struct PoseVars {
  Var tx;     // pixels
  Var ty;     // pixels
  Var r;      // degrees
  Var sigma;  // log-scale
};

// Elementwise. Binary ops accept equal shapes or a single-element operand,
// which is broadcast.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// scale * a + offset.
Var affine(Var a, double scale, double offset);
Var pow2(Var a);
Var sqrt(Var a);
Var abs(Var a);
/// sqrt(a^2 + delta^2). For delta far below any finite-difference step this
/// is a kink at 0, so gradient checks treat the sign of `a` as a branch.
Var smooth_abs(Var a, double delta);
/// Clamp to [lo, hi]; adjoint 1 strictly inside, 0 elsewhere.
Var clip(Var a, double lo, double hi);
/// a - period * floor(a / period), in [0, period). Adjoint 1.
Var wrap(Var a, double period);
/// Two-argument arctangent in degrees, range (-180, 180]. Zero (with zero
/// adjoints) at the origin.
Var atan2(Var y, Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double s) { return affine(a, 1.0, s); }
inline Var operator+(double s, Var a) { return affine(a, 1.0, s); }
inline Var operator-(Var a, double s) { return affine(a, 1.0, -s); }
inline Var operator-(double s, Var a) { return affine(a, -1.0, s); }
inline Var operator*(Var a, double s) { return affine(a, s, 0.0); }
inline Var operator*(double s, Var a) { return affine(a, s, 0.0); }
inline Var operator/(Var a, double s) { return affine(a, 1.0 / s, 0.0); }
inline Var operator-(Var a) { return affine(a, -1.0, 0.0); }

enum class Padding { kZero, kReplicate };

// Spatial (2D inputs).
/// Correlation with output shape equal to input shape. Padding applies to
/// taps that fall outside the input.
Var conv2d_same(Var a, const Kernel& k, Padding padding = Padding::kZero);
Var subsample(Var a, std::span<const Index> rows, std::span<const Index> cols);
/// subsample(conv2d_same(a, k), rows, cols) without computing the discarded
/// outputs. Zero padding.
Var conv2d_subsample(Var a, const Kernel& k, std::span<const Index> rows, std::span<const Index> cols);
/// Bilinear resize with pixel centers at (i + 0.5) / extent; edge-clamped.
Var resize_bilinear(Var a, Index rows, Index cols);
/// Samples `a` through the inverse similarity transform of the pose, about
/// the image centers. Out-of-bounds taps read 0.
Var warp_bilinear(Var a, const PoseVars& pose, Index rows, Index cols);

// Structural.
Var channel(Var a, Index k);
Var stack(std::span<const Var> planes);
Var concat(std::span<const Var> parts);

// Reductions to a scalar.
Var sum(Var a);
Var dot(Var a, Var b);
Var l2norm(Var a);

}  // namespace dhog
