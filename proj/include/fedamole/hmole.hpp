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
#include <map>
#include <optional>
#include <vector>

#include "fedamole/autodiff.hpp"
#include "fedamole/backbone.hpp"

namespace fedamole {

// Low-rank adapter: delta(h) = scaling * B A h. B starts at zero.
struct LoRAExpert {
  int id = 0;
  Parameter a;  // [rank x in]
  Parameter b;  // [out x rank]

  static LoRAExpert Create(int id, std::size_t rank, std::size_t in_dim,
                           std::size_t out_dim, Rng& rng);
  [[nodiscard]] std::size_t rank() const { return a.value.rows(); }
};

enum class RouterKind {
  kTokenProjection,  // shape-invariant HMoLE router W^t [rank x in]
  kVanilla,          // MoLE router W_r [total_experts x in], masked
};

// One client's adapter at one injection point.
struct HMoLEModuleState {
  InjectionPoint point;
  RouterKind router = RouterKind::kTokenProjection;
  std::optional<LoRAExpert> shared;
  Parameter token_projection;  // [rank x in]; used by kTokenProjection
  Parameter vanilla_router;    // [total_experts x in]; used by kVanilla
  std::vector<LoRAExpert> experts;  // assigned domain experts, ascending id
  std::size_t k_e = 2;
  double scaling = 1.0;  // alpha_lora / rank
  double dropout = 0.0;

  // Throws InfeasibleError when fewer than k_e experts are assigned and
  // Error(kInvalidArgument) on duplicate or unsorted ids.
  void Validate() const;
  [[nodiscard]] std::vector<Parameter*> TrainableParameters();
  // Index of an expert id within `experts`, or -1.
  [[nodiscard]] int IndexOf(int expert_id) const;
};

struct RoutingDecision {
  std::vector<double> probabilities;  // over `experts`, module order
  std::vector<std::size_t> selected;  // top-k_e indices, best first
};

// Indices of the k largest values; ties go to the lower index.
std::vector<std::size_t> TopK(std::span<const double> values, std::size_t k);

// Routing for a single token h [1 x in] through the HMoLE router.
RoutingDecision RouteToken(const HMoLEModuleState& state, const Tensor& h);

struct ModuleOutput {
  Var y;             // [T x out]
  Var probabilities; // [T x |experts|]
  std::vector<std::size_t> argmax;  // per token, index into experts
};

// Full adapter forward on hidden states [T x in]. `dropout_rng` enables LoRA
// input dropout (training only); pass nullptr for evaluation.
ModuleOutput ModuleForward(Tape& tape, HMoLEModuleState& state,
                           const Parameter& frozen_weight, Var hidden,
                           Rng* dropout_rng = nullptr);

// Untaped convenience for a single token; returns y [1 x out].
Tensor ModuleForwardToken(HMoLEModuleState& state,
                          const Parameter& frozen_weight, const Tensor& h,
                          RoutingDecision* routing = nullptr);

// f: fraction of tokens whose argmax expert is j (treated as a constant);
// p: mean routing probability of j (differentiable).
struct LoadBalanceStats {
  std::vector<double> f;
  Var p;  // [1 x |experts|]
};

LoadBalanceStats MakeLoadBalanceStats(const ModuleOutput& out);
// sum over modules of |E| * sum_j f_j * p_j, as a [1 x 1] node.
Var LoadBalanceLoss(const std::map<InjectionPoint, LoadBalanceStats>& stats);
// Per-module value on plain vectors.
double LoadBalanceValue(std::span<const double> f, std::span<const double> p);

// Running sums of token and expert embeddings over an embedding set.
class EmbeddingAccumulator {
 public:
  // hidden: module inputs [T x in] of one sequence.
  void Add(const HMoLEModuleState& state, const Tensor& hidden);

  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] const Tensor& token_sum() const { return token_sum_; }
  [[nodiscard]] const std::map<int, Tensor>& expert_sums() const {
    return expert_sums_;
  }
  // Throw Error(kInvalidArgument) when no token was accumulated.
  [[nodiscard]] Tensor TokenMean() const;
  [[nodiscard]] std::map<int, Tensor> ExpertMeans() const;
  // Mean raw module input; the client embedding under the vanilla router.
  [[nodiscard]] Tensor HiddenMean() const;

 private:
  std::size_t count_ = 0;
  Tensor token_sum_;
  Tensor hidden_sum_;
  std::map<int, Tensor> expert_sums_;
};

}  // namespace fedamole
