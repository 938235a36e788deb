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

#include "fedamole/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <system_error>

#include "fedamole/error.hpp"

namespace fedamole {

namespace {

constexpr const char* kCsvHeader =
    "mode,seed,round,client,acc,loss,experts_assigned";

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string Trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

double ParseDouble(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kData, fmt::format("summary line {}: '{}' is not a "
                                              "number", line, s));
  }
}

}  // namespace

void ConfigureLogging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("fedamole");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("FEDAMOLE_LOG")) {
      spdlog::set_level(spdlog::level::from_str(env));
    }
    return true;
  }();
  (void)once;
}

std::vector<ClientData> BuildClientData(const ExperimentConfig& cfg,
                                        std::uint64_t seed) {
  CorpusConfig corpus_cfg = cfg.data.corpus;
  corpus_cfg.vocab_size = cfg.backbone.vocab_size;
  const std::vector<Example> corpus = GenerateCorpus(corpus_cfg);
  const std::size_t clients = cfg.federation.clients;
  switch (cfg.data.partition) {
    case PartitionKind::kTaskSkew:
      return PartitionTaskSkew(corpus, clients, seed);
    case PartitionKind::kDirichlet:
      return PartitionDirichlet(corpus, clients, cfg.data.alpha, seed);
    case PartitionKind::kIid:
      return PartitionIid(corpus, clients, seed);
  }
  throw Error(ErrorKind::kConfig, "unknown partition");
}

RunResult RunSingle(const ExperimentConfig& cfg, Mode mode,
                    std::uint64_t seed,
                    std::optional<RoundPlan> initial_plan) {
  cfg.Validate();
  RunResult result;
  result.mode = mode;
  result.seed = seed;
  result.events.push_back(nlohmann::json{{"event", "config"},
                                         {"mode", std::string(ModeName(mode))},
                                         {"seed", seed},
                                         {"config", ToJson(cfg)}}
                              .dump());
  const Backbone backbone(cfg.backbone);
  EventSink sink = [&result](const nlohmann::json& e) {
    result.events.push_back(e.dump());
  };
  spdlog::info("run {} seed {}", ModeName(mode), seed);
  result.log = RunTraining(backbone, BuildClientData(cfg, seed),
                           cfg.federation, mode, seed,
                           std::move(initial_plan), sink);
  result.events.push_back(nlohmann::json{{"event", "mtal"},
                                         {"mtal", Mtal(result.log)}}
                              .dump());
  return result;
}

std::string SummaryCsv(std::span<const RunResult> runs) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const RunResult& run : runs) {
    const std::string_view mode = ModeName(run.mode);
    for (const MetricRecord& rec : run.log.records()) {
      for (std::size_t i = 0; i < rec.accuracy.size(); ++i) {
        out += fmt::format("{},{},{},{},{},{},{}\n", mode, run.seed,
                           rec.round, i, rec.accuracy[i], rec.loss[i],
                           rec.experts_assigned[i]);
      }
    }
    const MetricRecord& last = run.log.records().back();
    const double mean_loss =
        std::accumulate(last.loss.begin(), last.loss.end(), 0.0) /
        static_cast<double>(last.loss.size());
    const std::size_t experts = std::accumulate(
        last.experts_assigned.begin(), last.experts_assigned.end(),
        std::size_t{0});
    out += fmt::format("{},{},{},MTAL,{},{},{}\n", mode, run.seed, last.round,
                       Mtal(run.log), mean_loss, experts);
  }
  return out;
}

void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw Error(ErrorKind::kConfigIo,
                  "cannot write '" + tmp.string() + "'");
    }
    f << content;
    if (!f.flush()) {
      throw Error(ErrorKind::kConfigIo,
                  "write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorKind::kConfigIo, "cannot rename onto '" + path.string() +
                                          "': " + ec.message());
  }
}

std::vector<RunResult> RunExperiment(const ExperimentConfig& cfg,
                                     std::span<const Mode> modes,
                                     std::span<const std::uint64_t> seeds,
                                     const std::filesystem::path& out_dir) {
  cfg.Validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorKind::kConfigIo, "cannot create output directory '" +
                                          out_dir.string() + "'");
  }
  std::vector<RunResult> runs;
  for (Mode mode : modes) {
    for (std::uint64_t seed : seeds) {
      RunResult r = RunSingle(cfg, mode, seed);
      std::string text;
      for (const std::string& line : r.events) text += line + "\n";
      WriteFileAtomic(
          out_dir / fmt::format("events_{}_seed{}.jsonl", ModeName(mode), seed),
          text);
      spdlog::info("{} seed {}: MTAL {:.4f}", ModeName(mode), seed,
                   Mtal(r.log));
      r.events.clear();
      runs.push_back(std::move(r));
    }
  }
  WriteFileAtomic(out_dir / "summary.csv", SummaryCsv(runs));
  return runs;
}

std::vector<ReportRow> ReportFromCsv(std::span<const std::string> csv_texts) {
  struct RunKey {
    std::string mode, seed;
    auto operator<=>(const RunKey&) const = default;
  };
  struct RunAcc {
    std::optional<double> mtal;
    int last_round = 0;
    double last_sum = 0.0;
    std::size_t last_count = 0;
  };
  std::map<RunKey, RunAcc> runs;
  std::vector<std::string> mode_order;

  for (const std::string& text : csv_texts) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
      throw Error(ErrorKind::kData, "summary is empty");
    }
    const std::vector<std::string> header = SplitCsvLine(Trim(line));
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[Trim(header[i])] = i;
    for (const char* need : {"mode", "seed", "round", "client", "acc"}) {
      if (!col.contains(need)) {
        throw Error(ErrorKind::kData,
                    fmt::format("summary is missing column '{}'", need));
      }
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      line = Trim(line);
      if (line.empty()) continue;
      const std::vector<std::string> cells = SplitCsvLine(line);
      if (cells.size() != header.size()) {
        throw Error(ErrorKind::kData,
                    fmt::format("summary line {}: expected {} cells, got {}",
                                line_no, header.size(), cells.size()));
      }
      const RunKey key{cells[col["mode"]], cells[col["seed"]]};
      if (std::find(mode_order.begin(), mode_order.end(), key.mode) ==
          mode_order.end()) {
        mode_order.push_back(key.mode);
      }
      RunAcc& acc = runs[key];
      const double value = ParseDouble(cells[col["acc"]], line_no);
      if (cells[col["client"]] == "MTAL") {
        acc.mtal = value;
        continue;
      }
      const int round =
          static_cast<int>(ParseDouble(cells[col["round"]], line_no));
      if (round > acc.last_round) {
        acc.last_round = round;
        acc.last_sum = 0.0;
        acc.last_count = 0;
      }
      if (round == acc.last_round) {
        acc.last_sum += value;
        ++acc.last_count;
      }
    }
  }

  std::vector<ReportRow> rows;
  for (const std::string& mode : mode_order) {
    std::vector<double> values;
    for (const auto& [key, acc] : runs) {
      if (key.mode != mode) continue;
      if (acc.mtal) {
        values.push_back(*acc.mtal);
      } else if (acc.last_count > 0) {
        values.push_back(acc.last_sum / static_cast<double>(acc.last_count));
      }
    }
    if (values.empty()) continue;
    ReportRow row;
    row.mode = mode;
    row.seeds = values.size();
    const double n = static_cast<double>(values.size());
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / n);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ReportRow> ReportFromFiles(
    std::span<const std::filesystem::path> paths) {
  std::vector<std::string> texts;
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
      throw Error(ErrorKind::kConfigIo,
                  "cannot open summary '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    texts.push_back(ss.str());
  }
  return ReportFromCsv(texts);
}

std::string FormatReport(std::span<const ReportRow> rows) {
  std::string out =
      "# MTAL per mode: mean and population std over seeds\n";
  out += fmt::format("{:<12} {:>5} {:>8} {:>8}\n", "mode", "seeds", "mean",
                     "std");
  for (const ReportRow& r : rows) {
    out += fmt::format("{:<12} {:>5} {:>8.4f} {:>8.4f}\n", r.mode, r.seeds,
                       r.mean, r.stddev);
  }
  return out;
}

}  // namespace fedamole
