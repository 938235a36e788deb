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


#include <cmath>
#include <vector>

#include "doctest.h"
#include "fedamole/backbone.hpp"
#include "fedamole/error.hpp"

using namespace fedamole;

namespace {

Adapter Identity() {
  return [](Tape& tape, Var h, const Parameter& w) {
    return ad::MatmulNT(h, tape.Constant(w.value));
  };
}

AdapterMap IdentityEverywhere(int layers) {
  AdapterMap m;
  for (InjectionPoint p : AllInjectionPoints(layers)) m[p] = Identity();
  return m;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("same seed gives bit-identical parameters") {
  const Backbone a(BackboneConfig{}), b(BackboneConfig{});
  CHECK(a.Checksum() == b.Checksum());
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
}

TEST_CASE("parameter count matches closed form") {
  const BackboneConfig cfg;
  const std::size_t v = 64, d = 32, l = 2, ff = 64, t = 64;
  const std::size_t per_layer = 2 * d + 4 * d * d + 2 * d * ff;
  const std::size_t expected = v * d + t * d + l * per_layer + d + v * d;
  CHECK(expected == 22688);
  CHECK(Backbone(cfg).ParameterCount() == expected);
}

TEST_CASE("different seeds differ; all parameters frozen") {
  BackboneConfig other;
  other.seed = 99;
  const Backbone a(BackboneConfig{}), b(other);
  CHECK(a.Checksum() != b.Checksum());
  for (const Parameter* p : a.parameters()) CHECK_FALSE(p->trainable);
}

TEST_CASE("injection points are Q and V of every layer") {
  const auto pts = AllInjectionPoints(3);
  REQUIRE(pts.size() == 6);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].index() == static_cast<int>(i));
    CHECK(pts[i].layer == static_cast<int>(i / 2));
  }
  CHECK(pts[1].projection == Projection::kV);
}

TEST_CASE("logits shape and hidden states per module") {
  const Backbone bb(BackboneConfig{});
  const std::vector<int> tokens = {1, 5, 9, 2, 63};
  Tape tape;
  const ForwardResult r = bb.Forward(tape, tokens, IdentityEverywhere(2));
  CHECK(r.logits.value().rows() == tokens.size());
  CHECK(r.logits.value().cols() == 64);
  CHECK(r.hidden.size() == 4);
  for (const auto& [pt, h] : r.hidden) {
    CHECK(h.value().rows() == tokens.size());
    CHECK(h.value().cols() == 32);
  }
}

TEST_CASE("identity adapters reproduce the pure backbone") {
  const Backbone bb(BackboneConfig{});
  const std::vector<int> tokens = {3, 4, 5, 6, 7, 8};
  Tape tape;
  const Tensor with = bb.Forward(tape, tokens, IdentityEverywhere(2)).logits.value();
  CHECK(MaxAbsDiff(with, bb.Logits(tokens)) < 1e-12);
}

TEST_CASE("causal mask: later tokens do not affect earlier logits") {
  const Backbone bb(BackboneConfig{});
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> tok(0, 63), len(2, 20);
    std::vector<int> tokens(static_cast<std::size_t>(len(rng)));
    for (int& t : tokens) t = tok(rng);
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(
        1, tokens.size() - 1)(rng);
    std::vector<int> changed = tokens;
    changed[pos] = (changed[pos] + 1 + tok(rng) % 63) % 64;
    const Tensor a = bb.Logits(tokens), b = bb.Logits(changed);
    for (std::size_t t = 0; t < pos; ++t)
      for (std::size_t c = 0; c < a.cols(); ++c) CHECK(a(t, c) == b(t, c));
    double later = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c)
      later += std::abs(a(pos, c) - b(pos, c));
    CHECK(later > 0.0);
  }
}

TEST_CASE("adapter locality: a late module cannot change earlier hidden states") {
  const Backbone bb(BackboneConfig{});
  const std::vector<int> tokens = {10, 20, 30};
  AdapterMap adapters = IdentityEverywhere(2);
  const InjectionPoint late{1, Projection::kV};
  adapters[late] = [](Tape& tape, Var h, const Parameter& w) {
    return ad::Scale(ad::MatmulNT(h, tape.Constant(w.value)), 3.0);
  };
  Tape t1, t2;
  const ForwardResult plain = bb.Forward(t1, tokens, IdentityEverywhere(2));
  const ForwardResult perturbed = bb.Forward(t2, tokens, adapters);
  for (InjectionPoint p : AllInjectionPoints(2)) {
    const double diff =
        MaxAbsDiff(plain.hidden.at(p).value(), perturbed.hidden.at(p).value());
    if (p <= late) CHECK(diff == 0.0);
  }
  CHECK(MaxAbsDiff(plain.logits.value(), perturbed.logits.value()) > 0.0);
}

TEST_CASE("forward errors") {
  const Backbone bb(BackboneConfig{});
  const std::vector<int> bad = {1, 64};
  CHECK_THROWS_AS((void)bb.Logits(bad), Error);
  const std::vector<int> negative = {-1};
  CHECK_THROWS_AS((void)bb.Logits(negative), Error);
  const std::vector<int> too_long(65, 1);
  CHECK_THROWS_AS((void)bb.Logits(too_long), Error);
  const std::vector<int> empty;
  CHECK_THROWS_AS((void)bb.Logits(empty), Error);
}

TEST_CASE("invalid configs are rejected") {
  BackboneConfig c;
  c.heads = 3;
  CHECK_THROWS_AS(Backbone{c}, ConfigError);
  c = BackboneConfig{};
  c.hidden_dim = 0;
  CHECK_THROWS_AS(Backbone{c}, ConfigError);
  c = BackboneConfig{};
  c.vocab_size = -4;
  CHECK_THROWS_AS(Backbone{c}, ConfigError);
}
