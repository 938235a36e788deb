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

#include "fedamole/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "fedamole/error.hpp"

namespace fedamole {

namespace {

constexpr double kStructuredMass = 0.8;
constexpr int kSuccessors = 3;
constexpr double kSuccessorWeights[kSuccessors] = {0.5, 0.3, 0.2};

enum Stream : std::uint64_t { kDomainStream = 1, kSampleStream = 2 };

void Need(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(ErrorKind::kConfig, std::string("data.") + key, what);
}

int Sample(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    r -= probs[i];
    if (r <= 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace

void CorpusConfig::Validate(int max_seq_len) const {
  Need(domains >= 1, "domains", "must be >= 1");
  Need(sequences_per_domain >= 1, "sequences_per_domain", "must be >= 1");
  Need(instruction_length >= 1, "instruction_length", "must be >= 1");
  Need(response_length == 1 || response_length == 2, "response_length",
       "must be 1 or 2");
  Need(instruction_alphabet() >= 8, "domains",
       "vocabulary too small: need at least 8 instruction tokens after "
       "reserving 3 response tokens per domain");
  Need(instruction_length + response_length <= max_seq_len,
       "instruction_length",
       "instruction + response exceeds backbone max_seq_len");
}

std::vector<int> Example::Tokens() const {
  std::vector<int> t = instruction;
  t.insert(t.end(), response.begin(), response.end());
  return t;
}

TrainingSequence MakeTrainingSequence(const Example& e) {
  const std::vector<int> tokens = e.Tokens();
  TrainingSequence s;
  const std::size_t n = tokens.size();
  s.inputs.assign(tokens.begin(), tokens.end() - 1);
  s.targets.assign(tokens.begin() + 1, tokens.end());
  s.mask.resize(n - 1);
  for (std::size_t t = 0; t + 1 < n; ++t)
    s.mask[t] = t + 1 >= e.instruction.size();
  return s;
}

DomainModel BuildDomain(const CorpusConfig& cfg, int domain) {
  const auto alpha = static_cast<std::size_t>(cfg.instruction_alphabet());
  Rng rng = MakeRng(cfg.seed, {kDomainStream, static_cast<std::uint64_t>(domain)});
  DomainModel dm;
  dm.transition = Tensor({alpha, alpha},
                         (1.0 - kStructuredMass) / static_cast<double>(alpha));
  std::vector<int> states(alpha);
  std::iota(states.begin(), states.end(), 0);
  for (std::size_t a = 0; a < alpha; ++a) {
    std::vector<int> succ = states;
    std::shuffle(succ.begin(), succ.end(), rng);
    for (int k = 0; k < kSuccessors; ++k) {
      dm.transition(a, static_cast<std::size_t>(succ[k])) +=
          kStructuredMass * kSuccessorWeights[k];
    }
  }
  std::vector<int> perm = states;
  std::shuffle(perm.begin(), perm.end(), rng);
  dm.marker.assign(perm.begin(), perm.begin() + static_cast<long>(alpha / 2));
  std::sort(dm.marker.begin(), dm.marker.end());

  const int base = cfg.instruction_alphabet();
  dm.tag = base + domain;
  dm.labels[0] = base + cfg.domains + 2 * domain;
  dm.labels[1] = dm.labels[0] + 1;
  return dm;
}

std::vector<int> ResponseFor(const CorpusConfig& cfg, const DomainModel& dm,
                             std::span<const int> instruction) {
  std::size_t hits = 0;
  for (int tok : instruction)
    hits += std::binary_search(dm.marker.begin(), dm.marker.end(), tok) ? 1 : 0;
  const int label = dm.labels[2 * hits > instruction.size() ? 1 : 0];
  if (cfg.response_length == 1) return {label};
  return {dm.tag, label};
}

std::vector<Example> GenerateCorpus(const CorpusConfig& cfg) {
  const auto alpha = static_cast<std::size_t>(cfg.instruction_alphabet());
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(cfg.domains * cfg.sequences_per_domain));
  for (int k = 0; k < cfg.domains; ++k) {
    const DomainModel dm = BuildDomain(cfg, k);
    Rng rng = MakeRng(cfg.seed, {kSampleStream, static_cast<std::uint64_t>(k)});
    std::uniform_int_distribution<int> start(0, static_cast<int>(alpha) - 1);
    for (int n = 0; n < cfg.sequences_per_domain; ++n) {
      Example e;
      e.domain = k;
      int tok = start(rng);
      e.instruction.push_back(tok);
      for (int t = 1; t < cfg.instruction_length; ++t) {
        tok = Sample(dm.transition.row(static_cast<std::size_t>(tok)), rng);
        e.instruction.push_back(tok);
      }
      e.response = ResponseFor(cfg, dm, e.instruction);
      out.push_back(std::move(e));
    }
  }
  return out;
}

ClientData SplitExamples(std::vector<Example> examples, Rng& rng) {
  std::shuffle(examples.begin(), examples.end(), rng);
  const std::size_t n = examples.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  ClientData d;
  d.train.assign(examples.begin(), examples.begin() + static_cast<long>(n_train));
  d.val.assign(examples.begin() + static_cast<long>(n_train),
               examples.begin() + static_cast<long>(n_train + n_val));
  d.test.assign(examples.begin() + static_cast<long>(n_train + n_val),
                examples.end());
  return d;
}

namespace {

std::size_t DomainCount(const std::vector<Example>& corpus) {
  int mx = -1;
  for (const Example& e : corpus) mx = std::max(mx, e.domain);
  return static_cast<std::size_t>(mx + 1);
}

std::vector<ClientData> SplitAll(std::vector<std::vector<Example>> per_client,
                                 std::uint64_t seed) {
  std::vector<ClientData> out;
  for (std::size_t i = 0; i < per_client.size(); ++i) {
    Rng rng = MakeRng(seed, {0x5117, i});
    out.push_back(SplitExamples(std::move(per_client[i]), rng));
  }
  return out;
}

}  // namespace

std::vector<ClientData> PartitionTaskSkew(const std::vector<Example>& corpus,
                                          std::size_t clients,
                                          std::uint64_t seed) {
  const std::size_t domains = DomainCount(corpus);
  if (domains < clients) {
    throw Error(ErrorKind::kData,
                "task_skew partition needs at least as many domains (" +
                    std::to_string(domains) + ") as clients (" +
                    std::to_string(clients) + ")");
  }
  std::vector<std::vector<Example>> per_client(clients);
  for (const Example& e : corpus) {
    if (static_cast<std::size_t>(e.domain) < clients) {
      per_client[static_cast<std::size_t>(e.domain)].push_back(e);
    }
  }
  return SplitAll(std::move(per_client), seed);
}

std::vector<ClientData> PartitionDirichlet(const std::vector<Example>& corpus,
                                           std::size_t clients, double alpha,
                                           std::uint64_t seed,
                                           std::size_t min_train) {
  if (!(alpha > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "dirichlet alpha must be > 0");
  }
  if (clients == 0) throw Error(ErrorKind::kInvalidArgument, "no clients");
  const std::size_t domains = DomainCount(corpus);
  std::vector<std::vector<const Example*>> by_domain(domains);
  for (const Example& e : corpus)
    by_domain[static_cast<std::size_t>(e.domain)].push_back(&e);

  constexpr int kAttempts = 10;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng = MakeRng(seed, {0xd1c, static_cast<std::uint64_t>(attempt)});
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<std::vector<Example>> per_client(clients);
    for (const auto& members : by_domain) {
      std::vector<double> w(clients);
      double total = 0.0;
      for (double& x : w) total += (x = gamma(rng));
      if (total == 0.0) {
        std::uniform_int_distribution<std::size_t> pick(0, clients - 1);
        w[pick(rng)] = total = 1.0;
      }
      std::vector<const Example*> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t i = 0; i < clients; ++i) {
        cum += w[i] / total;
        const std::size_t end =
            i + 1 == clients
                ? shuffled.size()
                : std::min(shuffled.size(),
                           static_cast<std::size_t>(std::llround(
                               cum * static_cast<double>(shuffled.size()))));
        for (std::size_t k = begin; k < std::max(begin, end); ++k)
          per_client[i].push_back(*shuffled[k]);
        begin = std::max(begin, end);
      }
    }
    bool ok = true;
    for (const auto& c : per_client) ok = ok && c.size() * 8 / 10 >= min_train;
    if (ok) return SplitAll(std::move(per_client), seed);
  }
  throw Error(ErrorKind::kData,
              "dirichlet partition left a client with fewer than " +
                  std::to_string(min_train) + " training examples after " +
                  std::to_string(kAttempts) + " draws");
}

std::vector<ClientData> PartitionIid(const std::vector<Example>& corpus,
                                     std::size_t clients,
                                     std::uint64_t seed) {
  if (clients == 0) throw Error(ErrorKind::kInvalidArgument, "no clients");
  std::vector<Example> shuffled = corpus;
  Rng rng = MakeRng(seed, {0x11d});
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<std::vector<Example>> per_client(clients);
  for (std::size_t k = 0; k < shuffled.size(); ++k)
    per_client[k % clients].push_back(std::move(shuffled[k]));
  return SplitAll(std::move(per_client), seed);
}

std::vector<Example> SampleEmbeddingSet(const std::vector<Example>& train,
                                        std::size_t n, Rng& rng) {
  if (n > train.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "embedding set size " + std::to_string(n) +
                    " exceeds training set size " +
                    std::to_string(train.size()));
  }
  std::vector<Example> out;
  out.reserve(n);
  std::sample(train.begin(), train.end(), std::back_inserter(out), n, rng);
  return out;
}

void ExportCorpusJsonl(const std::filesystem::path& path,
                       const std::vector<Example>& corpus) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kData, "cannot write " + path.string());
  for (const Example& e : corpus) {
    nlohmann::json j = {{"instruction", e.instruction},
                        {"response", e.response},
                        {"domain", e.domain}};
    os << j.dump() << '\n';
  }
}

std::vector<Example> ImportCorpusJsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kData, "cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Example e;
      e.instruction = j.at("instruction").get<std::vector<int>>();
      e.response = j.at("response").get<std::vector<int>>();
      e.domain = j.at("domain").get<int>();
      if (e.instruction.empty() || e.response.empty() || e.domain < 0) {
        throw Error(ErrorKind::kData, "empty instruction/response or bad domain");
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::kData, path.string() + ":" +
                                        std::to_string(lineno) + ": " +
                                        ex.what());
    }
  }
  return out;
}

}  // namespace fedamole
