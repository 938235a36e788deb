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

// Reverse-selection expert assignment. Experts pick clients by embedding
// relevance; the per-module choice is the binary program
//
//   max <P, D>  s.t.  k_e <= sum_j D(i, j) <= b   for every client i
//                     sum_i D(i, j) == k_c          for every expert j
//
// solved exactly as a min-cost flow with arc lower bounds (the constraint
// matrix is a bipartite incidence matrix, hence totally unimodular).

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fedamole/tensor.hpp"

namespace fedamole {

// Scores S(i, j) = <client_i, expert_j> / sqrt(scale_dim), shape [C x E].
Tensor Relevance(std::span<const Tensor> client_embeddings,
                 std::span<const Tensor> expert_embeddings,
                 std::size_t scale_dim);

// Column-wise softmax: P(., j) is expert j's distribution over clients.
Tensor SelectionProbabilities(const Tensor& scores);

struct AssignmentProblem {
  Tensor probabilities;  // [C x E]
  std::size_t k_e = 1;   // min experts per client
  std::size_t k_c = 1;   // clients per expert
  std::size_t b = 1;     // max experts per client

  [[nodiscard]] std::size_t clients() const { return probabilities.rows(); }
  [[nodiscard]] std::size_t experts() const { return probabilities.cols(); }
  // Throws InfeasibleError naming the violated inequality.
  void Validate() const;
};

// Throws InfeasibleError unless C*k_e <= E*k_c <= C*b, k_c <= C, k_e <= b
// and b <= E.
void CheckFeasible(std::size_t clients, std::size_t experts, std::size_t k_e,
                   std::size_t k_c, std::size_t b);

class AssignmentMatrix {
 public:
  AssignmentMatrix() = default;
  AssignmentMatrix(std::size_t clients, std::size_t experts)
      : clients_(clients), experts_(experts), cells_(clients * experts, 0) {}

  [[nodiscard]] std::size_t clients() const { return clients_; }
  [[nodiscard]] std::size_t experts() const { return experts_; }
  [[nodiscard]] bool at(std::size_t i, std::size_t j) const {
    return cells_[i * experts_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool v) {
    cells_[i * experts_ + j] = v ? 1 : 0;
  }
  [[nodiscard]] std::size_t RowCount(std::size_t i) const;
  [[nodiscard]] std::size_t ColCount(std::size_t j) const;
  [[nodiscard]] std::span<const std::uint8_t> cells() const { return cells_; }

  friend bool operator==(const AssignmentMatrix&,
                         const AssignmentMatrix&) = default;

 private:
  std::size_t clients_ = 0;
  std::size_t experts_ = 0;
  std::vector<std::uint8_t> cells_;
};

// <P, D>, summed in row-major order.
double Objective(const Tensor& probabilities, const AssignmentMatrix& d);

// Throws Error(kProtocol) describing the first violated constraint.
void AuditAssignment(const AssignmentMatrix& d, std::size_t k_e,
                     std::size_t k_c, std::size_t b);

// Min-cost flow with arc lower bounds on a general directed graph. Arcs with
// negative cost are pre-saturated so successive shortest paths starts from a
// residual graph with nonnegative costs.
class FlowNetwork {
 public:
  static constexpr std::int64_t kInfinite =
      std::numeric_limits<std::int64_t>::max() / 4;

  explicit FlowNetwork(std::size_t nodes) : nodes_(nodes) {}

  std::size_t AddArc(std::size_t from, std::size_t to, std::int64_t lower,
                     std::int64_t upper, double cost);

  // Finds a minimum-cost flow satisfying every arc bound and conservation at
  // every node (a circulation). Returns false when no feasible flow exists.
  bool SolveCirculation();

  [[nodiscard]] std::int64_t flow(std::size_t arc) const {
    return arcs_[arc].flow;
  }
  [[nodiscard]] double total_cost() const;
  [[nodiscard]] std::size_t node_count() const { return nodes_; }

 private:
  struct Arc {
    std::size_t from, to;
    std::int64_t lower, upper;
    double cost;
    std::int64_t flow = 0;
  };

  std::size_t nodes_;
  std::vector<Arc> arcs_;
};

// Exact optimum of the assignment program. Deterministic for a given input.
AssignmentMatrix SolveAssignment(const AssignmentProblem& problem);

// A feasible assignment drawn at random (optimum for i.i.d. uniform P).
AssignmentMatrix RandomAssignment(std::size_t clients, std::size_t experts,
                                  std::size_t k_e, std::size_t k_c,
                                  std::size_t b, Rng& rng);

// Experts dealt to clients cyclically until each has k_c clients.
AssignmentMatrix RoundRobinAssignment(std::size_t clients,
                                      std::size_t experts, std::size_t k_e,
                                      std::size_t k_c, std::size_t b);

// Per-client ascending expert ids: E_i = { j : D(i, j) = 1 }.
using ModulePlan = std::vector<std::vector<int>>;
ModulePlan PlanFromAssignment(const AssignmentMatrix& d);
AssignmentMatrix AssignmentFromPlan(const ModulePlan& plan,
                                    std::size_t experts);

}  // namespace fedamole
