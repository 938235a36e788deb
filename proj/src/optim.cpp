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

#include "fedamole/optim.hpp"

#include <cmath>

#include "fedamole/error.hpp"

namespace fedamole {

void Adam::Step(std::span<Parameter* const> params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  for (Parameter* p : params) {
    if (!p->trainable) {
      p->ZeroGrad();
      continue;
    }
    auto [it, inserted] = moments_.try_emplace(p);
    Moments& mo = it->second;
    if (inserted) {
      mo.m = Tensor(p->value.shape());
      mo.v = Tensor(p->value.shape());
    } else if (!mo.m.SameShape(p->value)) {
      throw DimensionError("adam: parameter shape changed between steps");
    }
    auto val = p->value.data();
    auto g = p->grad.data();
    auto m = mo.m.data();
    auto v = mo.v.data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
    p->ZeroGrad();
  }
}

const Adam::Moments* Adam::moments(const Parameter& p) const {
  auto it = moments_.find(&p);
  return it == moments_.end() ? nullptr : &it->second;
}

}  // namespace fedamole
