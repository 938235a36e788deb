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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedamole/rng.hpp"
#include "fedamole/tensor.hpp"

namespace fedamole {

// Synthetic instruction corpus. Every domain owns a first-order Markov chain
// over the instruction alphabet and a labelling rule: the response label is
// chosen by whether the majority of instruction tokens fall in the domain's
// marker set. The top 3 * domains token ids are reserved for responses.
struct CorpusConfig {
  int vocab_size = 64;
  int domains = 4;
  int sequences_per_domain = 200;
  int instruction_length = 7;
  int response_length = 1;  // 1: [label]; 2: [domain tag, label]
  std::uint64_t seed = 7;

  void Validate(int max_seq_len) const;
  [[nodiscard]] int instruction_alphabet() const {
    return vocab_size - 3 * domains;
  }
  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

struct Example {
  std::vector<int> instruction;
  std::vector<int> response;
  int domain = 0;

  // instruction ++ response
  [[nodiscard]] std::vector<int> Tokens() const;
  friend bool operator==(const Example&, const Example&) = default;
};

// Next-token training view of an example: inputs = tokens[0, n-1),
// targets = tokens[1, n), mask selects targets inside the response.
struct TrainingSequence {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<bool> mask;
};
TrainingSequence MakeTrainingSequence(const Example& e);

struct DomainModel {
  Tensor transition;        // [alphabet x alphabet], rows sum to 1
  std::vector<int> marker;  // sorted marker tokens (half the alphabet)
  int tag = 0;
  int labels[2] = {0, 0};
};

DomainModel BuildDomain(const CorpusConfig& cfg, int domain);
std::vector<Example> GenerateCorpus(const CorpusConfig& cfg);
std::vector<int> ResponseFor(const CorpusConfig& cfg, const DomainModel& dm,
                             std::span<const int> instruction);

struct ClientData {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

enum class PartitionKind { kTaskSkew, kDirichlet, kIid };

// 80/10/10 split after a seeded shuffle.
ClientData SplitExamples(std::vector<Example> examples, Rng& rng);

// Client i receives every example of domain i. Throws when domains < clients.
std::vector<ClientData> PartitionTaskSkew(const std::vector<Example>& corpus,
                                          std::size_t clients,
                                          std::uint64_t seed);
// Per-domain client proportions drawn from Dirichlet(alpha). Redraws up to 10
// times when a client would get fewer than `min_train` training examples.
std::vector<ClientData> PartitionDirichlet(const std::vector<Example>& corpus,
                                           std::size_t clients, double alpha,
                                           std::uint64_t seed,
                                           std::size_t min_train = 10);
std::vector<ClientData> PartitionIid(const std::vector<Example>& corpus,
                                     std::size_t clients, std::uint64_t seed);

// Uniform sample without replacement, in training-set order.
std::vector<Example> SampleEmbeddingSet(const std::vector<Example>& train,
                                        std::size_t n, Rng& rng);

void ExportCorpusJsonl(const std::filesystem::path& path,
                       const std::vector<Example>& corpus);
std::vector<Example> ImportCorpusJsonl(const std::filesystem::path& path);

}  // namespace fedamole
