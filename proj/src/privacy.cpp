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

#include "fedamole/privacy.hpp"

#include <cmath>

#include "fedamole/error.hpp"

namespace fedamole {

void DPConfig::Validate() const {
  if (!enabled) return;
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ConfigError(ErrorKind::kConfig, "privacy.eta_dp", "must be > 0");
  }
  if (!(clip > 0.0) || !std::isfinite(clip)) {
    throw ConfigError(ErrorKind::kConfig, "privacy.c_clip", "must be > 0");
  }
}

Tensor SampleNormLaplace(std::size_t dim, double eta, Rng& rng) {
  if (dim == 0) throw Error(ErrorKind::kInvalidArgument, "noise dim is zero");
  if (!(eta > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "noise eta must be > 0");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({1, dim});
  double norm = 0.0;
  do {
    for (double& v : z.data()) v = normal(rng);
    norm = z.Norm();
  } while (norm == 0.0);
  std::gamma_distribution<double> radius(static_cast<double>(dim), 1.0 / eta);
  z *= radius(rng) / norm;
  return z;
}

Tensor ClipNorm(const Tensor& v, double bound) {
  const double n = v.Norm();
  Tensor out = v;
  if (n <= bound) return out;
  // Shrink the scale by ulps until rounding no longer overshoots the bound.
  for (double scale = bound / n;; scale = std::nextafter(scale, 0.0)) {
    Tensor scaled = out;
    scaled *= scale;
    if (scaled.Norm() <= bound) return scaled;
  }
}

Tensor UnitNormalize(const Tensor& v) {
  Tensor out = v;
  if (const double n = v.Norm(); n > 0.0) out *= 1.0 / n;
  return out;
}

Tensor Privatize(const Tensor& v, const DPConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return v;
  cfg.Validate();
  Tensor x = v;
  const Tensor z = SampleNormLaplace(x.size(), cfg.eta, rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
  return ClipNorm(x, cfg.clip);
}

}  // namespace fedamole
