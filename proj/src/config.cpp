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

#include "fedamole/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "fedamole/error.hpp"

namespace fedamole {

using nlohmann::json;

namespace {

std::string Join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void Fail(const std::string& key, const std::string& what) {
  throw ConfigError(ErrorKind::kConfig, key, what);
}

// Walks one JSON object; every key must be consumed by one of the readers.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) Fail(path_, "expected an object");
  }

  void Allow(std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j_.items()) {
      const bool known = std::any_of(keys.begin(), keys.end(),
                                     [&](const char* a) { return k == a; });
      if (!known) Fail(Join(path_, k), "unknown key");
    }
  }

  const json* Find(const char* key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void Unsigned(const char* key, T& out) const {
    if (const json* v = Find(key)) {
      if (!v->is_number_unsigned())
        Fail(Join(path_, key), "expected a non-negative integer");
      out = v->get<T>();
    }
  }

  void Int(const char* key, int& out) const {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) Fail(Join(path_, key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) Fail(Join(path_, key), "out of range");
      out = static_cast<int>(x);
    }
  }

  void Double(const char* key, double& out) const {
    if (const json* v = Find(key)) {
      if (!v->is_number()) Fail(Join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }

  void Bool(const char* key, bool& out) const {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) Fail(Join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void String(const char* key, std::string& out) const {
    if (const json* v = Find(key)) {
      if (!v->is_string()) Fail(Join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }

  [[nodiscard]] std::string Key(const char* key) const {
    return Join(path_, key);
  }

 private:
  const json& j_;
  std::string path_;
};

}  // namespace

std::string_view PartitionName(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::kTaskSkew: return "task_skew";
    case PartitionKind::kDirichlet: return "dirichlet";
    case PartitionKind::kIid: return "iid";
  }
  return "unknown";
}

PartitionKind ParsePartition(std::string_view name) {
  if (name == "task_skew") return PartitionKind::kTaskSkew;
  if (name == "dirichlet") return PartitionKind::kDirichlet;
  if (name == "iid") return PartitionKind::kIid;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown partition '" + std::string(name) + "'");
}

void ExperimentConfig::Validate() const {
  backbone.Validate();
  CorpusConfig corpus = data.corpus;
  corpus.vocab_size = backbone.vocab_size;
  corpus.Validate(backbone.max_seq_len);
  federation.Validate();
  if (data.partition == PartitionKind::kTaskSkew &&
      static_cast<std::size_t>(data.corpus.domains) < federation.clients) {
    Fail("data.domains", "task_skew needs at least one domain per client");
  }
  if (!(data.alpha > 0.0)) Fail("data.alpha", "must be > 0");
  if (seeds.empty()) Fail("seeds", "at least one seed is required");
  if (output_dir.empty()) Fail("output.dir", "must not be empty");
}

void ApplyJson(ExperimentConfig& cfg, const json& j) {
  Section root(j, "");
  root.Allow({"backbone", "data", "federation", "hmole", "privacy", "output",
              "seeds"});

  if (const json* b = root.Find("backbone")) {
    Section s(*b, "backbone");
    s.Allow({"vocab_size", "hidden_dim", "layers", "heads", "ff_dim",
             "max_seq_len", "seed"});
    BackboneConfig& c = cfg.backbone;
    s.Int("vocab_size", c.vocab_size);
    s.Int("hidden_dim", c.hidden_dim);
    s.Int("layers", c.layers);
    s.Int("heads", c.heads);
    s.Int("ff_dim", c.ff_dim);
    s.Int("max_seq_len", c.max_seq_len);
    s.Unsigned("seed", c.seed);
  }
  cfg.data.corpus.vocab_size = cfg.backbone.vocab_size;

  if (const json* d = root.Find("data")) {
    Section s(*d, "data");
    s.Allow({"domains", "sequences_per_domain", "instruction_length",
             "response_length", "seed", "partition", "alpha",
             "embedding_set_size", "metric"});
    CorpusConfig& c = cfg.data.corpus;
    s.Int("domains", c.domains);
    s.Int("sequences_per_domain", c.sequences_per_domain);
    s.Int("instruction_length", c.instruction_length);
    s.Int("response_length", c.response_length);
    s.Unsigned("seed", c.seed);
    std::string name;
    s.String("partition", name);
    if (!name.empty()) {
      try {
        cfg.data.partition = ParsePartition(name);
      } catch (const Error& e) {
        Fail(s.Key("partition"), e.what());
      }
    }
    s.Double("alpha", cfg.data.alpha);
    s.Unsigned("embedding_set_size", cfg.federation.embedding_set_size);
    name.clear();
    s.String("metric", name);
    if (!name.empty()) {
      try {
        cfg.federation.metric = ParseMetric(name);
      } catch (const Error& e) {
        Fail(s.Key("metric"), e.what());
      }
    }
  }

  if (const json* f = root.Find("federation")) {
    Section s(*f, "federation");
    s.Allow({"clients", "rounds", "local_steps", "lr", "lr_decay", "threads"});
    FLConfig& c = cfg.federation;
    s.Unsigned("clients", c.clients);
    s.Int("rounds", c.rounds);
    s.Int("local_steps", c.local_steps);
    s.Double("lr", c.lr);
    s.Double("lr_decay", c.lr_decay);
    s.Int("threads", c.threads);
  }

  if (const json* h = root.Find("hmole")) {
    Section s(*h, "hmole");
    s.Allow({"rank", "alpha_lora", "dropout", "k_e", "k_c", "b", "e_total",
             "beta"});
    HMoLEOptions& c = cfg.federation.hmole;
    s.Unsigned("rank", c.rank);
    s.Double("alpha_lora", c.alpha_lora);
    s.Double("dropout", c.dropout);
    s.Unsigned("k_e", c.k_e);
    s.Unsigned("k_c", c.k_c);
    s.Unsigned("b", c.b);
    s.Unsigned("e_total", c.e_total);
    s.Double("beta", c.beta);
  }

  if (const json* p = root.Find("privacy")) {
    Section s(*p, "privacy");
    s.Allow({"enabled", "eta_dp", "c_clip"});
    DPConfig& c = cfg.federation.privacy;
    s.Bool("enabled", c.enabled);
    s.Double("eta_dp", c.eta);
    s.Double("c_clip", c.clip);
  }

  if (const json* o = root.Find("output")) {
    Section s(*o, "output");
    s.Allow({"dir"});
    s.String("dir", cfg.output_dir);
  }

  if (const json* seeds = root.Find("seeds")) {
    if (!seeds->is_array()) Fail("seeds", "expected an array of integers");
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < seeds->size(); ++i) {
      const json& v = (*seeds)[i];
      if (!v.is_number_unsigned()) {
        Fail("seeds[" + std::to_string(i) + "]",
             "expected a non-negative integer");
      }
      out.push_back(v.get<std::uint64_t>());
    }
    cfg.seeds = std::move(out);
  }
}

ExperimentConfig ParseConfig(std::string_view text) {
  ExperimentConfig cfg;
  const bool blank = std::all_of(text.begin(), text.end(), [](char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t';
  });
  if (!blank) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(ErrorKind::kConfigParse, "", e.what());
    }
    ApplyJson(cfg, j);
  }
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(ErrorKind::kConfigIo, "",
                      "cannot open config file '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

json ToJson(const ExperimentConfig& cfg) {
  const BackboneConfig& b = cfg.backbone;
  const CorpusConfig& c = cfg.data.corpus;
  const FLConfig& f = cfg.federation;
  const HMoLEOptions& h = f.hmole;
  return json{
      {"backbone",
       {{"vocab_size", b.vocab_size},
        {"hidden_dim", b.hidden_dim},
        {"layers", b.layers},
        {"heads", b.heads},
        {"ff_dim", b.ff_dim},
        {"max_seq_len", b.max_seq_len},
        {"seed", b.seed}}},
      {"data",
       {{"domains", c.domains},
        {"sequences_per_domain", c.sequences_per_domain},
        {"instruction_length", c.instruction_length},
        {"response_length", c.response_length},
        {"seed", c.seed},
        {"partition", std::string(PartitionName(cfg.data.partition))},
        {"alpha", cfg.data.alpha},
        {"embedding_set_size", f.embedding_set_size},
        {"metric", std::string(MetricName(f.metric))}}},
      {"federation",
       {{"clients", f.clients},
        {"rounds", f.rounds},
        {"local_steps", f.local_steps},
        {"lr", f.lr},
        {"lr_decay", f.lr_decay},
        {"threads", f.threads}}},
      {"hmole",
       {{"rank", h.rank},
        {"alpha_lora", h.alpha_lora},
        {"dropout", h.dropout},
        {"k_e", h.k_e},
        {"k_c", h.k_c},
        {"b", h.b},
        {"e_total", h.e_total},
        {"beta", h.beta}}},
      {"privacy",
       {{"enabled", f.privacy.enabled},
        {"eta_dp", f.privacy.eta},
        {"c_clip", f.privacy.clip}}},
      {"output", {{"dir", cfg.output_dir}}},
      {"seeds", cfg.seeds},
  };
}

}  // namespace fedamole
