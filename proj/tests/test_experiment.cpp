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


#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedamole/error.hpp"
#include "fedamole/experiment.hpp"

using namespace fedamole;

namespace {

ExperimentConfig Tiny() {
  ExperimentConfig cfg;
  cfg.data.corpus.sequences_per_domain = 40;
  cfg.federation.rounds = 2;
  cfg.federation.local_steps = 3;
  cfg.federation.lr = 0.01;
  return cfg;
}

std::string ReadFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("report: mean and population std of MTAL rows") {
  const std::string csv =
      "mode,seed,round,client,acc,loss,experts_assigned\n"
      "fedamole,1,1,0,0.1,1,8\n"
      "fedamole,1,1,MTAL,0.6,1,8\n"
      "fedamole,2,1,MTAL,0.8,1,8\n";
  const std::vector<std::string> texts = {csv};
  const auto rows = ReportFromCsv(texts);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mode == "fedamole");
  CHECK(rows[0].seeds == 2);
  CHECK(rows[0].mean == doctest::Approx(0.7));
  CHECK(rows[0].stddev == doctest::Approx(0.1));
  const std::string table = FormatReport(rows);
  CHECK(table.find("population std") != std::string::npos);
  CHECK(table.find("0.7000") != std::string::npos);
}

TEST_CASE("report: single seed, two modes, last-round fallback") {
  const std::string one =
      "mode,seed,round,client,acc\n"
      "fedit,5,1,0,0.2\n"
      "fedit,5,2,0,0.4\n"
      "fedit,5,2,1,0.6\n"
      "fedamole,5,2,0,0.9\n";
  const std::vector<std::string> texts = {one};
  const auto rows = ReportFromCsv(texts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mode == "fedit");
  CHECK(rows[0].mean == doctest::Approx(0.5));
  CHECK(rows[0].stddev == 0.0);
  CHECK(rows[1].mode == "fedamole");
}

TEST_CASE("report errors") {
  const std::vector<std::string> missing = {"mode,seed,round,acc\nx,1,1,0.5\n"};
  try {
    (void)ReportFromCsv(missing);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find("client") != std::string::npos);
  }
  const std::vector<std::string> ragged = {
      "mode,seed,round,client,acc\nx,1,1,0\n"};
  CHECK_THROWS_AS(ReportFromCsv(ragged), Error);
  const std::vector<std::string> nan = {"mode,seed,round,client,acc\nx,1,1,0,zz\n"};
  CHECK_THROWS_AS(ReportFromCsv(nan), Error);
  const std::vector<std::string> empty = {""};
  CHECK_THROWS_AS(ReportFromCsv(empty), Error);
  const std::vector<std::filesystem::path> none = {"/nonexistent/summary.csv"};
  CHECK_THROWS_AS(ReportFromFiles(none), Error);
}

TEST_CASE("single run: config event first, mtal last, no rsea for fedit") {
  const ExperimentConfig cfg = Tiny();
  const RunResult a = RunSingle(cfg, Mode::kFedAMoLE, 42);
  REQUIRE(a.events.size() > 2);
  const auto first = nlohmann::json::parse(a.events.front());
  CHECK(first["event"] == "config");
  CHECK(first["mode"] == "fedamole");
  CHECK(ParseConfig(first["config"].dump()) == cfg);
  CHECK(nlohmann::json::parse(a.events.back())["event"] == "mtal");
  auto has_rsea = [](const RunResult& r) {
    for (const auto& e : r.events)
      if (nlohmann::json::parse(e)["event"] == "rsea") return true;
    return false;
  };
  CHECK(has_rsea(a));
  CHECK_FALSE(has_rsea(RunSingle(cfg, Mode::kFedIT, 42)));
}

TEST_CASE("ablate-s uploads carry no shared expert") {
  const RunResult r = RunSingle(Tiny(), Mode::kAblateS, 42);
  int uploads = 0;
  for (const auto& line : r.events) {
    const auto e = nlohmann::json::parse(line);
    if (e["event"] != "upload") continue;
    ++uploads;
    CHECK(e["has_shared"] == false);
  }
  CHECK(uploads == 8);
}

TEST_CASE("experiment writes events and a summary with one MTAL row per seed") {
  const auto dir = TempDir("fedamole_experiment_test");
  const std::vector<Mode> modes = {Mode::kFedAMoLE, Mode::kFedIT};
  const std::vector<std::uint64_t> seeds = {42, 62, 82};
  ExperimentConfig cfg = Tiny();
  cfg.federation.rounds = 1;
  cfg.federation.local_steps = 2;
  const auto runs = RunExperiment(cfg, modes, seeds, dir);
  CHECK(runs.size() == 6);
  for (Mode m : modes)
    for (auto s : seeds)
      CHECK(std::filesystem::exists(
          dir / ("events_" + std::string(ModeName(m)) + "_seed" +
                 std::to_string(s) + ".jsonl")));
  const std::string csv = ReadFile(dir / "summary.csv");
  CHECK(csv.rfind("mode,seed,round,client,acc,loss,experts_assigned\n", 0) == 0);
  std::size_t mtal_rows = 0, pos = 0;
  while ((pos = csv.find(",MTAL,", pos)) != std::string::npos) {
    ++mtal_rows;
    ++pos;
  }
  CHECK(mtal_rows == 6);
  const std::vector<std::string> texts = {csv};
  const auto rows = ReportFromCsv(texts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].seeds == 3);
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    CHECK(entry.path().extension() != ".tmp");
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical config and seed give byte-identical summaries") {
  const auto d1 = TempDir("fedamole_det_a"), d2 = TempDir("fedamole_det_b");
  const std::vector<Mode> modes = {Mode::kFedAMoLE};
  const std::vector<std::uint64_t> seeds = {7};
  RunExperiment(Tiny(), modes, seeds, d1);
  RunExperiment(Tiny(), modes, seeds, d2);
  CHECK(ReadFile(d1 / "summary.csv") == ReadFile(d2 / "summary.csv"));
  CHECK(ReadFile(d1 / "events_fedamole_seed7.jsonl") ==
        ReadFile(d2 / "events_fedamole_seed7.jsonl"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("client data: corpus fixed by data.seed, split by run seed") {
  const ExperimentConfig cfg = Tiny();
  const auto a = BuildClientData(cfg, 1), b = BuildClientData(cfg, 1),
             c = BuildClientData(cfg, 2);
  REQUIRE(a.size() == 4);
  CHECK(a[0].train == b[0].train);
  CHECK_FALSE(a[0].train == c[0].train);
  ExperimentConfig dir = cfg;
  dir.data.partition = PartitionKind::kDirichlet;
  dir.data.corpus.sequences_per_domain = 100;
  CHECK(BuildClientData(dir, 1).size() == 4);
  dir.data.partition = PartitionKind::kIid;
  CHECK(BuildClientData(dir, 1).size() == 4);
}

TEST_CASE("atomic write replaces content and fails cleanly") {
  const auto dir = TempDir("fedamole_atomic");
  std::filesystem::create_directories(dir);
  WriteFileAtomic(dir / "x.txt", "one");
  WriteFileAtomic(dir / "x.txt", "two");
  CHECK(ReadFile(dir / "x.txt") == "two");
  CHECK_FALSE(std::filesystem::exists(dir / "x.txt.tmp"));
  CHECK_THROWS_AS(WriteFileAtomic(dir / "missing" / "x.txt", "z"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("logging setup is idempotent") {
  ConfigureLogging();
  ConfigureLogging();
  CHECK(true);
}
