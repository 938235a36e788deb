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
#include <span>
#include <vector>

namespace fedamole {

using TokenSeq = std::vector<int>;

// Fraction of positions whose predicted sequence equals the reference.
double ExactMatchAccuracy(std::span<const TokenSeq> predictions,
                          std::span<const TokenSeq> references);

std::size_t LcsLength(std::span<const int> a, std::span<const int> b);

// Token-level ROUGE-L F1 (beta = 1). Throws on an empty reference.
double RougeL(std::span<const int> hypothesis, std::span<const int> reference);

struct MetricRecord {
  int round = 0;                           // 1-based
  std::vector<double> accuracy;            // per client, in [0, 1]
  std::vector<double> loss;                // per client mean training loss
  std::vector<std::size_t> experts_assigned;  // per client, summed over modules
};

class MetricLog {
 public:
  // Rounds must be appended contiguously starting at 1.
  void Append(MetricRecord record);
  // Replaces the latest record (same round number).
  void ReplaceLast(MetricRecord record);

  [[nodiscard]] const std::vector<MetricRecord>& records() const {
    return records_;
  }
  [[nodiscard]] bool empty() const { return records_.empty(); }

  friend bool operator==(const MetricLog&, const MetricLog&) = default;

 private:
  std::vector<MetricRecord> records_;
};

inline bool operator==(const MetricRecord& a, const MetricRecord& b) {
  return a.round == b.round && a.accuracy == b.accuracy && a.loss == b.loss &&
         a.experts_assigned == b.experts_assigned;
}

// Mean accuracy over clients at 1-based round t.
double Mta(const MetricLog& log, int round);
// Mta at the final round.
double Mtal(const MetricLog& log);

}  // namespace fedamole
