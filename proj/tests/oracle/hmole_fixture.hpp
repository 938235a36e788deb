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

// Randomly sized HMoLE modules with a scalar loss, for gradient checks.

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "fedamole/hmole.hpp"
#include "oracle/finite_diff.hpp"

namespace fedamole::oracle {

struct RandomModule {
  HMoLEModuleState state;
  Parameter weight;  // frozen [out x in]
  Tensor hidden;     // [T x in]
  Tensor readout;    // [T x out], fixed loss weights
  double lb_weight = 0.1;
};

// d <= 16, r <= 4, 1..4 experts. B matrices are random (not zero) so every
// path carries gradient.
inline RandomModule MakeRandomModule(Rng& rng, RouterKind router) {
  std::uniform_int_distribution<int> dim(2, 16), rank(1, 4), experts(1, 4),
      tokens(1, 5), shared(0, 1);
  const std::size_t d = static_cast<std::size_t>(dim(rng));
  const std::size_t out = static_cast<std::size_t>(dim(rng));
  const std::size_t r = static_cast<std::size_t>(rank(rng));
  const int n = experts(rng);
  RandomModule m;
  m.state.router = router;
  m.state.scaling = 16.0 / static_cast<double>(r);
  m.state.k_e = static_cast<std::size_t>(
      std::uniform_int_distribution<int>(1, n)(rng));
  auto randomize_b = [&](LoRAExpert& e) {
    e.b = Parameter(Tensor::Normal(out, r, 0.2, rng));
  };
  if (shared(rng) == 1) {
    m.state.shared = LoRAExpert::Create(-1, r, d, out, rng);
    randomize_b(*m.state.shared);
  }
  const int total = n + 2;
  std::vector<int> ids(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) ids[static_cast<std::size_t>(i)] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(n));
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    m.state.experts.push_back(LoRAExpert::Create(id, r, d, out, rng));
    randomize_b(m.state.experts.back());
  }
  m.state.token_projection = Parameter(Tensor::Normal(r, d, 1.0, rng));
  m.state.vanilla_router = Parameter(
      Tensor::Normal(static_cast<std::size_t>(total), d, 1.0, rng));
  m.weight = Parameter(Tensor::Normal(out, d, 0.5, rng), false);
  const std::size_t t = static_cast<std::size_t>(tokens(rng));
  m.hidden = Tensor::Normal(t, d, 1.0, rng);
  m.readout = Tensor::Normal(t, out, 1.0, rng);
  return m;
}

inline Var ModuleLoss(Tape& tape, RandomModule& m) {
  ModuleOutput out =
      ModuleForward(tape, m.state, m.weight, tape.Constant(m.hidden));
  Var task = ad::Sum(ad::Mul(out.y, tape.Constant(m.readout)));
  std::map<InjectionPoint, LoadBalanceStats> stats;
  stats.emplace(m.state.point, MakeLoadBalanceStats(out));
  return ad::Add(task, ad::Scale(LoadBalanceLoss(stats), m.lb_weight));
}

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
  std::string worst;
};

// Compares reverse-mode gradients of every trainable parameter with central
// differences; also confirms the frozen weight receives nothing.
inline GradientReport CheckModuleGradients(RandomModule& m) {
  std::vector<Parameter*> params = m.state.TrainableParameters();
  for (Parameter* p : params) p->ZeroGrad();
  m.weight.ZeroGrad();
  {
    Tape tape;
    tape.Backward(ModuleLoss(tape, m));
  }
  GradientReport report;
  if (m.weight.grad.Norm() != 0.0) {
    report.max_relative_error = 1.0;
    report.worst = "frozen weight received gradient";
    return report;
  }
  auto f = [&m] {
    Tape tape;
    return ModuleLoss(tape, m).value()[0];
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double numeric = CentralDifference(p, i, f);
      const double err = RelativeError(p.grad[i], numeric);
      ++report.entries;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = "parameter " + std::to_string(k) + " entry " +
                       std::to_string(i) + ": analytic " +
                       std::to_string(p.grad[i]) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace fedamole::oracle
