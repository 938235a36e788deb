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

#include <cstdint>
#include <span>
#include <unordered_map>

#include "fedamole/autodiff.hpp"

namespace fedamole {

struct AdamOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by Parameter address, so the
// parameters must outlive the optimizer and stay at fixed addresses.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  // Applies one update to every trainable parameter, then zeroes all grads.
  void Step(std::span<Parameter* const> params);

  void set_lr(double lr) { opts_.lr = lr; }
  [[nodiscard]] double lr() const { return opts_.lr; }
  [[nodiscard]] std::int64_t step_count() const { return step_; }

  struct Moments {
    Tensor m;
    Tensor v;
  };
  [[nodiscard]] const Moments* moments(const Parameter& p) const;

 private:
  AdamOptions opts_;
  std::int64_t step_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace fedamole
