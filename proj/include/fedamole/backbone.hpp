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

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedamole/autodiff.hpp"

namespace fedamole {

struct BackboneConfig {
  int vocab_size = 64;
  int hidden_dim = 32;
  int layers = 2;
  int heads = 2;
  int ff_dim = 64;
  int max_seq_len = 64;
  std::uint64_t seed = 1234;

  void Validate() const;
  friend bool operator==(const BackboneConfig&,
                         const BackboneConfig&) = default;
};

enum class Projection { kQ = 0, kV = 1 };

// Where an adapter module is injected: the Q or V projection of a layer.
struct InjectionPoint {
  int layer = 0;
  Projection projection = Projection::kQ;

  // Dense index in [0, 2 * layers).
  [[nodiscard]] int index() const {
    return layer * 2 + static_cast<int>(projection);
  }
  [[nodiscard]] std::string name() const;

  friend auto operator<=>(const InjectionPoint&,
                          const InjectionPoint&) = default;
};

// {Q, V} x layers, ordered by index().
std::vector<InjectionPoint> AllInjectionPoints(int layers);

// Replaces the frozen linear map y = W h at an injection point. Receives the
// module input h [T x d] and the frozen weight W [out x d]; must return the
// full output (including W h).
using Adapter =
    std::function<Var(Tape& tape, Var hidden, const Parameter& weight)>;
using AdapterMap = std::map<InjectionPoint, Adapter>;

struct ForwardResult {
  Var logits;                              // [T x V]
  std::map<InjectionPoint, Var> hidden;    // module inputs, [T x d]
};

// Small pre-norm decoder-only transformer with learned absolute positions.
// Weights are stored [out x in]; every parameter is frozen.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  [[nodiscard]] const BackboneConfig& config() const { return cfg_; }

  ForwardResult Forward(Tape& tape, std::span<const int> tokens,
                        const AdapterMap& adapters = {}) const;
  // Logits of the unadapted model.
  [[nodiscard]] Tensor Logits(std::span<const int> tokens) const;

  [[nodiscard]] const Parameter& projection(InjectionPoint point) const;
  [[nodiscard]] std::vector<const Parameter*> parameters() const;
  [[nodiscard]] std::size_t ParameterCount() const;
  // FNV-1a over the raw bytes of every parameter value.
  [[nodiscard]] std::uint64_t Checksum() const;

 private:
  struct Layer {
    Parameter attn_norm, wq, wk, wv, wo;
    Parameter ffn_norm, w1, w2;
  };

  BackboneConfig cfg_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  std::vector<Layer> layers_;
  Parameter final_norm_;
  Parameter head_;
};

}  // namespace fedamole
