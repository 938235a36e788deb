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

#include "fedamole/hmole.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedamole/error.hpp"

namespace fedamole {

LoRAExpert LoRAExpert::Create(int id, std::size_t rank, std::size_t in_dim,
                              std::size_t out_dim, Rng& rng) {
  LoRAExpert e;
  e.id = id;
  e.a = Parameter(Tensor::Normal(rank, in_dim,
                                 1.0 / std::sqrt(static_cast<double>(in_dim)),
                                 rng));
  e.b = Parameter(Tensor::Zeros(out_dim, rank));
  return e;
}

void HMoLEModuleState::Validate() const {
  if (experts.size() < k_e) {
    throw InfeasibleError(point.name() + ": " +
                          std::to_string(experts.size()) +
                          " assigned experts is fewer than k_e = " +
                          std::to_string(k_e));
  }
  for (std::size_t i = 1; i < experts.size(); ++i) {
    if (experts[i - 1].id >= experts[i].id) {
      throw Error(ErrorKind::kInvalidArgument,
                  point.name() + ": expert ids must be unique and ascending");
    }
  }
  if (router == RouterKind::kVanilla) {
    for (const LoRAExpert& e : experts) {
      if (e.id < 0 ||
          static_cast<std::size_t>(e.id) >= vanilla_router.value.rows()) {
        throw DimensionError(point.name() + ": expert id " +
                             std::to_string(e.id) +
                             " outside the vanilla router output");
      }
    }
  }
}

std::vector<Parameter*> HMoLEModuleState::TrainableParameters() {
  std::vector<Parameter*> out;
  if (shared) {
    out.push_back(&shared->a);
    out.push_back(&shared->b);
  }
  out.push_back(router == RouterKind::kTokenProjection ? &token_projection
                                                       : &vanilla_router);
  for (LoRAExpert& e : experts) {
    out.push_back(&e.a);
    out.push_back(&e.b);
  }
  return out;
}

int HMoLEModuleState::IndexOf(int expert_id) const {
  for (std::size_t i = 0; i < experts.size(); ++i)
    if (experts[i].id == expert_id) return static_cast<int>(i);
  return -1;
}

std::vector<std::size_t> TopK(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] > values[b];
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

RoutingDecision RouteToken(const HMoLEModuleState& state, const Tensor& h) {
  state.Validate();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.cols()));
  std::vector<double> logits;
  if (state.router == RouterKind::kTokenProjection) {
    const Tensor ht = MatmulNT(h, state.token_projection.value);
    for (const LoRAExpert& e : state.experts) {
      const Tensor he = MatmulNT(h, e.a.value);
      logits.push_back(Dot(ht.data(), he.data()) * inv_sqrt_d);
    }
  } else {
    const Tensor all = MatmulNT(h, state.vanilla_router.value);
    for (const LoRAExpert& e : state.experts)
      logits.push_back(all[static_cast<std::size_t>(e.id)]);
  }
  RoutingDecision d;
  const Tensor p = SoftmaxRows(Tensor::Row(logits));
  d.probabilities.assign(p.data().begin(), p.data().end());
  d.selected = TopK(d.probabilities, state.k_e);
  return d;
}

ModuleOutput ModuleForward(Tape& tape, HMoLEModuleState& state,
                           const Parameter& frozen_weight, Var hidden,
                           Rng* dropout_rng) {
  state.Validate();
  const Tensor& hv = hidden.value();
  const std::size_t len = hv.rows();
  const std::size_t n = state.experts.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hv.cols()));

  Var y = ad::MatmulNT(hidden, tape.Constant(frozen_weight.value));

  const bool use_dropout = dropout_rng != nullptr && state.dropout > 0.0;
  Var lora_in = hidden;
  if (use_dropout) {
    std::bernoulli_distribution keep(1.0 - state.dropout);
    Tensor mask(hv.shape());
    for (double& m : mask.data())
      m = keep(*dropout_rng) ? 1.0 / (1.0 - state.dropout) : 0.0;
    lora_in = ad::Mul(hidden, tape.Constant(std::move(mask)));
  }

  if (state.shared) {
    Var low = ad::MatmulNT(lora_in, tape.Param(state.shared->a));
    y = ad::Add(y, ad::Scale(ad::MatmulNT(low, tape.Param(state.shared->b)),
                             state.scaling));
  }

  std::vector<Var> a_params, expert_emb;
  for (LoRAExpert& e : state.experts) a_params.push_back(tape.Param(e.a));

  Var probs;
  if (state.router == RouterKind::kTokenProjection) {
    Var ht = ad::MatmulNT(hidden, tape.Param(state.token_projection));
    std::vector<Var> logits;
    for (std::size_t j = 0; j < n; ++j) {
      expert_emb.push_back(ad::MatmulNT(hidden, a_params[j]));
      logits.push_back(
          ad::Scale(ad::RowSum(ad::Mul(ht, expert_emb[j])), inv_sqrt_d));
    }
    probs = ad::SoftmaxRows(ad::ConcatCols(logits));
  } else {
    Var logits = ad::MatmulNT(hidden, tape.Param(state.vanilla_router));
    Tensor keep({len, logits.value().cols()});
    for (std::size_t t = 0; t < len; ++t)
      for (const LoRAExpert& e : state.experts)
        keep(t, static_cast<std::size_t>(e.id)) = 1.0;
    Var full = ad::MaskedSoftmaxRows(logits, keep);
    std::vector<Var> cols;
    for (const LoRAExpert& e : state.experts)
      cols.push_back(ad::SliceCols(full, static_cast<std::size_t>(e.id), 1));
    probs = ad::ConcatCols(cols);
  }

  const Tensor& pv = probs.value();
  Tensor select({len, n});
  ModuleOutput out;
  out.argmax.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    const auto top = TopK(pv.row(t), state.k_e);
    for (std::size_t j : top) select(t, j) = 1.0;
    out.argmax[t] = TopK(pv.row(t), 1)[0];
  }
  Var weights = ad::Mul(probs, tape.Constant(select));

  for (std::size_t j = 0; j < n; ++j) {
    bool used = false;
    for (std::size_t t = 0; t < len && !used; ++t) used = select(t, j) != 0.0;
    if (!used) continue;
    Var low = (!use_dropout && !expert_emb.empty())
                  ? expert_emb[j]
                  : ad::MatmulNT(lora_in, a_params[j]);
    Var feature = ad::Scale(
        ad::MatmulNT(low, tape.Param(state.experts[j].b)), state.scaling);
    y = ad::Add(y, ad::MulCol(feature, ad::SliceCols(weights, j, 1)));
  }
  out.y = y;
  out.probabilities = probs;
  return out;
}

Tensor ModuleForwardToken(HMoLEModuleState& state,
                          const Parameter& frozen_weight, const Tensor& h,
                          RoutingDecision* routing) {
  Tape tape;
  ModuleOutput out =
      ModuleForward(tape, state, frozen_weight, tape.Constant(h));
  if (routing != nullptr) {
    const Tensor& p = out.probabilities.value();
    routing->probabilities.assign(p.data().begin(), p.data().end());
    routing->selected = TopK(routing->probabilities, state.k_e);
  }
  return out.y.value();
}

LoadBalanceStats MakeLoadBalanceStats(const ModuleOutput& out) {
  LoadBalanceStats s;
  const std::size_t n = out.probabilities.value().cols();
  s.f.assign(n, 0.0);
  for (std::size_t j : out.argmax) s.f[j] += 1.0;
  for (double& f : s.f) f /= static_cast<double>(out.argmax.size());
  s.p = ad::ColMean(out.probabilities);
  return s;
}

Var LoadBalanceLoss(const std::map<InjectionPoint, LoadBalanceStats>& stats) {
  if (stats.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "load_balance_loss: no module statistics");
  }
  Var total;
  for (const auto& [point, s] : stats) {
    Tape& tape = *s.p.tape();
    if (s.f.size() != s.p.value().cols()) {
      throw DimensionError("load_balance_loss: f/p size mismatch at " +
                           point.name());
    }
    const double n = static_cast<double>(s.f.size());
    Var f = tape.Constant(Tensor::Row(s.f));
    Var term = ad::Scale(ad::Sum(ad::Mul(f, s.p)), n);
    total = total.valid() ? ad::Add(total, term) : term;
  }
  return total;
}

double LoadBalanceValue(std::span<const double> f, std::span<const double> p) {
  if (f.empty() || f.size() != p.size()) {
    throw DimensionError("load_balance_value: f/p size mismatch");
  }
  return static_cast<double>(f.size()) * Dot(f, p);
}

void EmbeddingAccumulator::Add(const HMoLEModuleState& state,
                               const Tensor& hidden) {
  auto col_sum = [](const Tensor& t) {
    Tensor s({1, t.cols()});
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) s(0, j) += t(i, j);
    return s;
  };
  auto accumulate = [](Tensor& into, const Tensor& add) {
    if (into.empty()) {
      into = add;
    } else {
      into += add;
    }
  };
  if (state.router == RouterKind::kTokenProjection) {
    accumulate(token_sum_,
               col_sum(MatmulNT(hidden, state.token_projection.value)));
  }
  accumulate(hidden_sum_, col_sum(hidden));
  for (const LoRAExpert& e : state.experts) {
    accumulate(expert_sums_[e.id], col_sum(MatmulNT(hidden, e.a.value)));
  }
  count_ += hidden.rows();
}

namespace {

Tensor MeanOf(const Tensor& sum, std::size_t count) {
  if (count == 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "embedding mean over zero tokens");
  }
  Tensor m = sum;
  m *= 1.0 / static_cast<double>(count);
  return m;
}

}  // namespace

Tensor EmbeddingAccumulator::TokenMean() const {
  return MeanOf(token_sum_, count_);
}

Tensor EmbeddingAccumulator::HiddenMean() const {
  return MeanOf(hidden_sum_, count_);
}

std::map<int, Tensor> EmbeddingAccumulator::ExpertMeans() const {
  if (count_ == 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "embedding mean over zero tokens");
  }
  std::map<int, Tensor> out;
  for (const auto& [id, s] : expert_sums_) out.emplace(id, MeanOf(s, count_));
  return out;
}

}  // namespace fedamole
