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

#include "dhog/tape.hpp"

#include "dhog/error.hpp"

#include <numeric>
#include <string>
#include <utility>

namespace dhog {

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::kVariable: return "variable";
    case OpTag::kConstant: return "constant";
    case OpTag::kAdd: return "add";
    case OpTag::kSub: return "sub";
    case OpTag::kMul: return "mul";
    case OpTag::kDiv: return "div";
    case OpTag::kAffine: return "affine";
    case OpTag::kPow2: return "pow2";
    case OpTag::kSqrt: return "sqrt";
    case OpTag::kAbs: return "abs";
    case OpTag::kSmoothAbs: return "smooth_abs";
    case OpTag::kClip: return "clip";
    case OpTag::kWrap: return "wrap";
    case OpTag::kAtan2: return "atan2";
    case OpTag::kConv2d: return "conv2d_same";
    case OpTag::kSubsample: return "subsample";
    case OpTag::kConvSubsample: return "conv2d_subsample";
    case OpTag::kResize: return "resize_bilinear";
    case OpTag::kWarp: return "warp_bilinear";
    case OpTag::kChannel: return "channel";
    case OpTag::kStack: return "stack";
    case OpTag::kConcat: return "concat";
    case OpTag::kSum: return "sum";
    case OpTag::kDot: return "dot";
    case OpTag::kL2Norm: return "l2norm";
    case OpTag::kCorrupt: return "corrupt";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("variable initialized with non-finite values");
  Node n;
  n.op = OpTag::kVariable;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant initialized with non-finite values");
  Node n;
  n.op = OpTag::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(OpTag op, Tensor value, std::vector<std::size_t> parents, Node::BackwardFn backward,
                 Node::TangentFn tangent_fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(op));
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.requires_grad = false;
  for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) {
    n.backward = std::move(backward);
    n.tangent_fn = std::move(tangent_fn);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::adjoint_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_adjoint) {
    n.adjoint = Tensor(n.value.shape(), 0.0);
    n.has_adjoint = true;
  }
  return n.adjoint;
}

void Tape::clear_adjoints() {
  for (Node& n : nodes_) {
    if (n.has_adjoint) n.adjoint.set_zero();
  }
}

void Tape::run_backward(std::size_t from) {
  for (std::size_t i = from + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.has_adjoint || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n);
  }
}

void Tape::backward(Var seed) {
  if (seed.value().size() != 1) {
    throw ShapeError("backward() needs a scalar seed, got shape " + seed.shape().str());
  }
  backward(seed, Tensor(seed.shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (seed.shape() != output.shape()) {
    throw ShapeError("seed shape " + seed.shape().str() + " does not match output " +
                     output.shape().str());
  }
  clear_adjoints();
  adjoint_slot(output.id()).array() = seed.array();
  run_backward(output.id());
}

void Tape::push_forward(std::span<const std::pair<Var, Tensor>> seeds) {
  zero_cache_.clear();
  for (Node& n : nodes_) n.has_tangent = false;
  for (const auto& [v, t] : seeds) {
    Node& n = nodes_[v.id()];
    if (n.op != OpTag::kVariable) throw ShapeError("tangents may only be seeded on variables");
    if (t.shape() != n.value.shape()) throw ShapeError("tangent shape mismatch");
    n.tangent = t;
    n.has_tangent = true;
  }
  for (Node& n : nodes_) {
    if (n.has_tangent || !n.requires_grad || !n.tangent_fn) continue;
    n.tangent = n.tangent_fn(*this, n);
    n.has_tangent = true;
  }
}

const Tensor& Tape::tangent(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.has_tangent) return n.tangent;
  zero_cache_.emplace_back(n.value.shape(), 0.0);
  return zero_cache_.back();
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_adjoint) return n.adjoint;
  return Tensor(n.value.shape(), 0.0);
}

Tensor Tape::tangent_of(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_tangent) return n.tangent;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::note_branch(std::uint64_t code) {
  // FNV-1a over the 8 bytes of the code.
  for (int i = 0; i < 8; ++i) {
    branch_hash_ ^= (code >> (8 * i)) & 0xffU;
    branch_hash_ *= 1099511628211ULL;
  }
}

Kernel::Kernel(Index rows, Index cols, std::vector<double> weights)
    : rows_(rows), cols_(cols), weights_(std::move(weights)) {
  if (rows_ < 1 || cols_ < 1) throw ShapeError("kernel extents must be >= 1");
  if (static_cast<Index>(weights_.size()) != rows_ * cols_) {
    throw ShapeError("kernel weight count does not match its extents");
  }
}

Kernel Kernel::separable(std::vector<double> column_factor, std::vector<double> row_factor) {
  const auto kh = static_cast<Index>(column_factor.size());
  const auto kw = static_cast<Index>(row_factor.size());
  std::vector<double> w(static_cast<std::size_t>(kh * kw));
  for (Index r = 0; r < kh; ++r) {
    for (Index c = 0; c < kw; ++c) {
      w[static_cast<std::size_t>(r * kw + c)] =
          column_factor[static_cast<std::size_t>(r)] * row_factor[static_cast<std::size_t>(c)];
    }
  }
  Kernel k(kh, kw, std::move(w));
  k.column_factor_ = std::move(column_factor);
  k.row_factor_ = std::move(row_factor);
  return k;
}

double Kernel::sum() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

}  // namespace dhog
