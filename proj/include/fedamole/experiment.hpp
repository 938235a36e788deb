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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedamole/config.hpp"
#include "fedamole/evalkit.hpp"
#include "fedamole/fedsim.hpp"

namespace fedamole {

// Reads FEDAMOLE_LOG (trace, debug, info, warn, error, off) and routes the
// default logger to stderr.
void ConfigureLogging();

// Corpus and partition for one seed. The corpus depends only on data.seed;
// the client split is drawn from `seed`.
std::vector<ClientData> BuildClientData(const ExperimentConfig& cfg,
                                        std::uint64_t seed);

struct RunResult {
  Mode mode = Mode::kFedAMoLE;
  std::uint64_t seed = 0;
  MetricLog log;
  std::vector<std::string> events;  // JSON lines, config first
};

RunResult RunSingle(const ExperimentConfig& cfg, Mode mode,
                    std::uint64_t seed,
                    std::optional<RoundPlan> initial_plan = {});

// Columns: mode,seed,round,client,acc,loss,experts_assigned. One row per
// (round, client) plus one client="MTAL" row per run.
std::string SummaryCsv(std::span<const RunResult> runs);

// Writes to a sibling temp file, then renames over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& content);

// Runs every (mode, seed) pair and writes events_<mode>_seed<seed>.jsonl and
// summary.csv into `out_dir`.
std::vector<RunResult> RunExperiment(const ExperimentConfig& cfg,
                                     std::span<const Mode> modes,
                                     std::span<const std::uint64_t> seeds,
                                     const std::filesystem::path& out_dir);

struct ReportRow {
  std::string mode;
  std::size_t seeds = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// MTAL per (mode, seed) from summary CSV text: the MTAL row when present,
// otherwise the mean accuracy at the run's last round. Throws Error(kData)
// on missing columns or malformed rows.
std::vector<ReportRow> ReportFromCsv(std::span<const std::string> csv_texts);
std::vector<ReportRow> ReportFromFiles(
    std::span<const std::filesystem::path> paths);
std::string FormatReport(std::span<const ReportRow> rows);

}  // namespace fedamole
