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

#include "fedamole/rng.hpp"
#include "fedamole/tensor.hpp"

namespace fedamole {

struct DPConfig {
  bool enabled = false;
  double eta = 10.0;   // privacy parameter; larger means less noise
  double clip = 1.0;   // l2 bound on uploaded embeddings

  void Validate() const;
  friend bool operator==(const DPConfig&, const DPConfig&) = default;
};

// Draws z with density proportional to exp(-eta * ||z||_2) in `dim`
// dimensions: a uniform direction scaled by a Gamma(dim, 1/eta) radius.
Tensor SampleNormLaplace(std::size_t dim, double eta, Rng& rng);

// v * min(1, bound / ||v||).
Tensor ClipNorm(const Tensor& v, double bound);

// clip(v + z) when enabled; identity otherwise.
Tensor Privatize(const Tensor& v, const DPConfig& cfg, Rng& rng);

// v / ||v|| (zero stays zero). Uploads are normalized before Privatize so a
// unit clip bound covers the clean embedding.
Tensor UnitNormalize(const Tensor& v);

}  // namespace fedamole
