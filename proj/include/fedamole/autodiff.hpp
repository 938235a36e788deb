// Copyright 2026 The fedamole Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedamole/tensor.hpp"

namespace fedamole {

struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor v, bool is_trainable = true)
      : value(std::move(v)), grad(value.shape()), trainable(is_trainable) {}

  void ZeroGrad() { grad.Fill(0.0); }
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records primitive operations in execution order, which is a topological
// order by construction. Nodes whose inputs are all constants or frozen
// parameters are marked as not requiring gradients and are skipped during
// the reverse sweep.
class Tape {
 public:
  // Called during the reverse sweep with the node's own id; accumulates the
  // node's adjoint into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // Leaf bound to a parameter; the same Parameter maps to a single node.
  Var Param(Parameter& param);

  Var Record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  // Reverse sweep from a scalar node; accumulates into trainable Parameter
  // grads. Throws if `loss` belongs to another tape or is not a scalar.
  void Backward(Var loss);

  [[nodiscard]] const Tensor& value(std::size_t id) const {
    return nodes_[id].value;
  }
  [[nodiscard]] bool requires_grad(std::size_t id) const {
    return nodes_[id].requires_grad;
  }
  [[nodiscard]] bool requires_grad(Var v) const {
    return requires_grad(v.id());
  }
  // Adjoint of a node; zero-initialized on first access.
  Tensor& grad(std::size_t id);
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Differentiable operations. All inputs must live on the same tape.
namespace ad {

Var Matmul(Var a, Var b);
// a * b^T
Var MatmulNT(Var a, Var b);
Var Add(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
// Multiplies row t of `a` by col(t, 0); `col` has shape [rows x 1].
Var MulCol(Var a, Var col);
// [rows x cols] -> [rows x 1]
Var RowSum(Var a);
// [rows x cols] -> [1 x cols], averaging over rows.
Var ColMean(Var a);
// Sum of all entries, as a [1 x 1] tensor.
Var Sum(Var a);
Var GatherRows(Var table, std::span<const int> ids);
Var SliceCols(Var a, std::size_t start, std::size_t count);
Var ConcatCols(std::span<const Var> parts);
Var SoftmaxRows(Var a);
// keep(i, j) == 0 removes the entry from the row's support (probability 0).
Var MaskedSoftmaxRows(Var a, const Tensor& keep);
Var RmsNorm(Var a, Var weight, double eps = 1e-6);
Var Gelu(Var a);
// Mean masked-token negative log-likelihood, [1 x 1].
Var NllLoss(Var logits, std::span<const int> targets,
            const std::vector<bool>& mask);

}  // namespace ad

}  // namespace fedamole
