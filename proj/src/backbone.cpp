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

#include "fedamole/backbone.hpp"

#include <cmath>
#include <cstring>

#include "fedamole/error.hpp"

namespace fedamole {

namespace {

void RequirePositive(int v, const char* key) {
  if (v < 1) {
    throw ConfigError(ErrorKind::kConfig, std::string("backbone.") + key,
                      "must be >= 1");
  }
}

Parameter Frozen(Tensor t) { return Parameter(std::move(t), false); }

Parameter Ones(std::size_t n) { return Frozen(Tensor({1, n}, 1.0)); }

}  // namespace

void BackboneConfig::Validate() const {
  RequirePositive(vocab_size, "vocab_size");
  RequirePositive(hidden_dim, "hidden_dim");
  RequirePositive(layers, "layers");
  RequirePositive(heads, "heads");
  RequirePositive(ff_dim, "ff_dim");
  RequirePositive(max_seq_len, "max_seq_len");
  if (hidden_dim % heads != 0) {
    throw ConfigError(ErrorKind::kConfig, "backbone.heads",
                      "hidden_dim must be divisible by heads");
  }
}

std::string InjectionPoint::name() const {
  return "layer" + std::to_string(layer) +
         (projection == Projection::kQ ? ".q" : ".v");
}

std::vector<InjectionPoint> AllInjectionPoints(int layers) {
  std::vector<InjectionPoint> out;
  for (int l = 0; l < layers; ++l) {
    out.push_back({l, Projection::kQ});
    out.push_back({l, Projection::kV});
  }
  return out;
}

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  Rng rng(cfg_.seed);
  const auto v = static_cast<std::size_t>(cfg_.vocab_size);
  const auto d = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto ff = static_cast<std::size_t>(cfg_.ff_dim);
  const auto t = static_cast<std::size_t>(cfg_.max_seq_len);
  const double wd = 1.0 / std::sqrt(static_cast<double>(d));
  const double wf = 1.0 / std::sqrt(static_cast<double>(ff));

  token_embedding_ = Frozen(Tensor::Normal(v, d, 1.0, rng));
  position_embedding_ = Frozen(Tensor::Normal(t, d, 0.5, rng));
  for (int l = 0; l < cfg_.layers; ++l) {
    Layer layer;
    layer.attn_norm = Ones(d);
    layer.wq = Frozen(Tensor::Normal(d, d, wd, rng));
    layer.wk = Frozen(Tensor::Normal(d, d, wd, rng));
    layer.wv = Frozen(Tensor::Normal(d, d, wd, rng));
    layer.wo = Frozen(Tensor::Normal(d, d, wd, rng));
    layer.ffn_norm = Ones(d);
    layer.w1 = Frozen(Tensor::Normal(ff, d, wd, rng));
    layer.w2 = Frozen(Tensor::Normal(d, ff, wf, rng));
    layers_.push_back(std::move(layer));
  }
  final_norm_ = Ones(d);
  head_ = Frozen(Tensor::Normal(v, d, wd, rng));
}

const Parameter& Backbone::projection(InjectionPoint point) const {
  if (point.layer < 0 || point.layer >= cfg_.layers) {
    throw Error(ErrorKind::kInvalidArgument,
                "no such injection point: " + point.name());
  }
  const Layer& l = layers_[static_cast<std::size_t>(point.layer)];
  return point.projection == Projection::kQ ? l.wq : l.wv;
}

std::vector<const Parameter*> Backbone::parameters() const {
  std::vector<const Parameter*> out{&token_embedding_, &position_embedding_};
  for (const Layer& l : layers_) {
    for (const Parameter* p : {&l.attn_norm, &l.wq, &l.wk, &l.wv, &l.wo,
                               &l.ffn_norm, &l.w1, &l.w2}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_norm_);
  out.push_back(&head_);
  return out;
}

std::size_t Backbone::ParameterCount() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::uint64_t Backbone::Checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : parameters()) {
    for (double v : p->value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

ForwardResult Backbone::Forward(Tape& tape, std::span<const int> tokens,
                                const AdapterMap& adapters) const {
  const std::size_t len = tokens.size();
  if (len == 0) throw Error(ErrorKind::kInvalidArgument, "empty sequence");
  if (len > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw Error(ErrorKind::kInvalidArgument,
                "sequence length " + std::to_string(len) +
                    " exceeds max_seq_len " +
                    std::to_string(cfg_.max_seq_len));
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= cfg_.vocab_size) {
      throw Error(ErrorKind::kInvalidArgument,
                  "token id " + std::to_string(tok) + " outside vocabulary");
    }
  }
  auto frozen = [&tape](const Parameter& p) { return tape.Constant(p.value); };

  std::vector<int> positions(len);
  for (std::size_t i = 0; i < len; ++i) positions[i] = static_cast<int>(i);
  Var x = ad::Add(ad::GatherRows(frozen(token_embedding_), tokens),
                  ad::GatherRows(frozen(position_embedding_), positions));

  Tensor causal({len, len});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j <= i; ++j) causal(i, j) = 1.0;

  const auto d = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto heads = static_cast<std::size_t>(cfg_.heads);
  const std::size_t dh = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardResult result;
  for (int li = 0; li < cfg_.layers; ++li) {
    const Layer& layer = layers_[static_cast<std::size_t>(li)];
    Var h = ad::RmsNorm(x, frozen(layer.attn_norm));
    auto project = [&](Projection kind, const Parameter& w) {
      const InjectionPoint point{li, kind};
      result.hidden[point] = h;
      if (auto it = adapters.find(point); it != adapters.end()) {
        return it->second(tape, h, w);
      }
      return ad::MatmulNT(h, frozen(w));
    };
    Var q = project(Projection::kQ, layer.wq);
    Var k = ad::MatmulNT(h, frozen(layer.wk));
    Var v = project(Projection::kV, layer.wv);

    std::vector<Var> head_out;
    for (std::size_t hi = 0; hi < heads; ++hi) {
      Var qh = ad::SliceCols(q, hi * dh, dh);
      Var kh = ad::SliceCols(k, hi * dh, dh);
      Var vh = ad::SliceCols(v, hi * dh, dh);
      Var scores = ad::Scale(ad::MatmulNT(qh, kh), attn_scale);
      Var attn = ad::MaskedSoftmaxRows(scores, causal);
      head_out.push_back(ad::Matmul(attn, vh));
    }
    Var merged = heads == 1 ? head_out[0] : ad::ConcatCols(head_out);
    x = ad::Add(x, ad::MatmulNT(merged, frozen(layer.wo)));

    Var hf = ad::RmsNorm(x, frozen(layer.ffn_norm));
    Var ffn = ad::MatmulNT(ad::Gelu(ad::MatmulNT(hf, frozen(layer.w1))),
                           frozen(layer.w2));
    x = ad::Add(x, ffn);
  }
  result.logits =
      ad::MatmulNT(ad::RmsNorm(x, frozen(final_norm_)), frozen(head_));
  return result;
}

Tensor Backbone::Logits(std::span<const int> tokens) const {
  Tape tape;
  return Forward(tape, tokens).logits.value();
}

}  // namespace fedamole
