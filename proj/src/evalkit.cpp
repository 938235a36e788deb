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

#include "fedamole/evalkit.hpp"

#include <algorithm>
#include <string>

#include "fedamole/error.hpp"

namespace fedamole {

double ExactMatchAccuracy(std::span<const TokenSeq> predictions,
                          std::span<const TokenSeq> references) {
  if (predictions.size() != references.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "exact_match: prediction/reference counts differ");
  }
  if (references.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "exact_match: empty set");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < references.size(); ++i)
    hits += predictions[i] == references[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(references.size());
}

std::size_t LcsLength(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double RougeL(std::span<const int> hypothesis, std::span<const int> reference) {
  if (reference.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "rouge_l: empty reference");
  }
  const std::size_t lcs = LcsLength(hypothesis, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

void MetricLog::Append(MetricRecord record) {
  const int expected = static_cast<int>(records_.size()) + 1;
  if (record.round != expected) {
    throw Error(ErrorKind::kInvalidArgument,
                "metric log: expected round " + std::to_string(expected) +
                    ", got " + std::to_string(record.round));
  }
  for (double a : record.accuracy) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "metric log: accuracy outside [0, 1]");
    }
  }
  records_.push_back(std::move(record));
}

void MetricLog::ReplaceLast(MetricRecord record) {
  if (records_.empty() || records_.back().round != record.round) {
    throw Error(ErrorKind::kInvalidArgument,
                "metric log: replacement round mismatch");
  }
  records_.pop_back();
  Append(std::move(record));
}

double Mta(const MetricLog& log, int round) {
  if (log.empty()) throw Error(ErrorKind::kInvalidArgument, "mta: empty log");
  if (round < 1 || static_cast<std::size_t>(round) > log.records().size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "mta: round " + std::to_string(round) + " not in log");
  }
  const auto& acc = log.records()[static_cast<std::size_t>(round - 1)].accuracy;
  if (acc.empty()) throw Error(ErrorKind::kInvalidArgument, "mta: no clients");
  double s = 0.0;
  for (double a : acc) s += a;
  return s / static_cast<double>(acc.size());
}

double Mtal(const MetricLog& log) {
  if (log.empty()) throw Error(ErrorKind::kInvalidArgument, "mtal: empty log");
  return Mta(log, static_cast<int>(log.records().size()));
}

}  // namespace fedamole
