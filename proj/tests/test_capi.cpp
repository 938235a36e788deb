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


// Exercises the shared library through its C header only.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedamole/fedamole.h"

namespace {

const char* kTiny = R"({
  "data": {"sequences_per_domain": 40},
  "federation": {"rounds": 2, "local_steps": 3, "lr": 0.01}
})";

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::strlen(fam_version()) > 0);
  CHECK(std::string(fam_status_string(FAM_OK)) == "ok");
  CHECK(std::strlen(fam_status_string(FAM_ERR_PROTOCOL)) > 0);
  CHECK(std::strlen(fam_status_string(static_cast<fam_status>(99))) > 0);
}

TEST_CASE("config lifecycle and error reporting") {
  fam_config* cfg = nullptr;
  REQUIRE(fam_config_default(&cfg) == FAM_OK);
  CHECK(std::string(fam_config_output_dir(cfg)) == "results");

  char* text = nullptr;
  REQUIRE(fam_config_to_json(cfg, &text) == FAM_OK);
  fam_config* again = nullptr;
  CHECK(fam_config_parse(text, &again) == FAM_OK);
  fam_string_free(text);
  fam_config_free(again);

  CHECK(fam_config_set_json(cfg, R"({"hmole": {"k_e": 9}})") == FAM_ERR_CONFIG);
  CHECK(std::string(fam_last_error_key()) == "hmole.k_e");
  CHECK(std::strlen(fam_last_error()) > 0);
  CHECK(fam_config_set_json(cfg, R"({"output": {"dir": "elsewhere"}})") == FAM_OK);
  CHECK(std::string(fam_config_output_dir(cfg)) == "elsewhere");
  CHECK(std::string(fam_last_error()).empty());
  fam_config_free(cfg);

  fam_config* bad = nullptr;
  CHECK(fam_config_parse("{oops", &bad) == FAM_ERR_CONFIG_PARSE);
  CHECK(bad == nullptr);
  CHECK(fam_config_load("/nonexistent.json", &bad) == FAM_ERR_CONFIG_IO);
  CHECK(fam_config_parse(R"({"mystery": 1})", &bad) == FAM_ERR_CONFIG);
  CHECK(std::string(fam_last_error_key()) == "mystery");
  CHECK(fam_config_parse("", nullptr) == FAM_ERR_INVALID_ARGUMENT);
  fam_config_free(nullptr);
}

TEST_CASE("modes") {
  fam_mode m;
  CHECK(fam_mode_from_string("ablate-r", &m) == FAM_OK);
  CHECK(m == FAM_MODE_ABLATE_R);
  CHECK(std::string(fam_mode_name(FAM_MODE_FEDIT_FT)) == "fedit_ft");
  CHECK(fam_mode_from_string("nope", &m) == FAM_ERR_INVALID_ARGUMENT);
  CHECK(fam_mode_name(static_cast<fam_mode>(42)) == nullptr);
}

TEST_CASE("training through the C API") {
  fam_config* cfg = nullptr;
  REQUIRE(fam_config_parse(kTiny, &cfg) == FAM_OK);
  fam_metric_log* log = nullptr;
  REQUIRE(fam_run_training(cfg, FAM_MODE_FEDAMOLE, 42, &log) == FAM_OK);
  CHECK(fam_metric_log_rounds(log) == 2);
  CHECK(fam_metric_log_clients(log) == 4);
  double a = -1, l = -1, mta = -1, mtal = -1;
  CHECK(fam_metric_log_accuracy(log, 2, 3, &a) == FAM_OK);
  CHECK((a >= 0.0 && a <= 1.0));
  CHECK(fam_metric_log_loss(log, 1, 0, &l) == FAM_OK);
  CHECK(l > 0.0);
  CHECK(fam_metric_log_mta(log, 2, &mta) == FAM_OK);
  CHECK(fam_metric_log_mtal(log, &mtal) == FAM_OK);
  CHECK(mta == mtal);
  CHECK(fam_metric_log_accuracy(log, 3, 0, &a) == FAM_ERR_INVALID_ARGUMENT);
  CHECK(fam_metric_log_accuracy(log, 0, 0, &a) == FAM_ERR_INVALID_ARGUMENT);
  CHECK(fam_metric_log_accuracy(log, 1, 4, &a) == FAM_ERR_INVALID_ARGUMENT);
  fam_metric_log_free(log);
  CHECK(fam_run_training(cfg, static_cast<fam_mode>(17), 1, &log) ==
        FAM_ERR_INVALID_ARGUMENT);
  fam_config_free(cfg);
}

TEST_CASE("experiment and report") {
  fam_config* cfg = nullptr;
  REQUIRE(fam_config_parse(kTiny, &cfg) == FAM_OK);
  const auto dir = std::filesystem::temp_directory_path() / "fedamole_capi";
  std::filesystem::remove_all(dir);
  const fam_mode modes[] = {FAM_MODE_FEDAMOLE, FAM_MODE_RANDOM};
  const uint64_t seeds[] = {1, 2};
  REQUIRE(fam_experiment_run(cfg, modes, 2, seeds, 2, dir.c_str()) == FAM_OK);
  const std::string summary = (dir / "summary.csv").string();
  const char* paths[] = {summary.c_str()};
  char* text = nullptr;
  REQUIRE(fam_report(paths, 1, &text) == FAM_OK);
  const std::string table = text;
  fam_string_free(text);
  CHECK(table.find("fedamole") != std::string::npos);
  CHECK(table.find("random") != std::string::npos);
  const char* missing[] = {"/nonexistent/summary.csv"};
  CHECK(fam_report(missing, 1, &text) == FAM_ERR_CONFIG_IO);
  CHECK(fam_experiment_run(cfg, modes, 0, seeds, 2, dir.c_str()) ==
        FAM_ERR_INVALID_ARGUMENT);
  std::filesystem::remove_all(dir);
  fam_config_free(cfg);
}

TEST_CASE("assignment solver and rouge through the C API") {
  const double p[] = {0.9, 0.1, 0.1, 0.9};
  uint8_t out[4] = {};
  double obj = 0.0;
  REQUIRE(fam_solve_assignment(p, 2, 2, 1, 1, 2, out, &obj) == FAM_OK);
  CHECK(out[0] == 1);
  CHECK(out[1] == 0);
  CHECK(out[2] == 0);
  CHECK(out[3] == 1);
  CHECK(obj == doctest::Approx(1.8));
  const double q[] = {0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  uint8_t o6[6];
  CHECK(fam_solve_assignment(q, 3, 2, 2, 2, 2, o6, nullptr) == FAM_ERR_INFEASIBLE);
  CHECK(std::string(fam_last_error()).find("(6 > 4)") != std::string::npos);

  const int32_t ref[] = {0, 1, 2, 3}, hyp[] = {0, 2, 3};
  double f = 0.0;
  REQUIRE(fam_rouge_l(hyp, 3, ref, 4, &f) == FAM_OK);
  CHECK(std::abs(f - 0.857) < 1e-3);
  CHECK(fam_rouge_l(hyp, 3, ref, 0, &f) == FAM_ERR_INVALID_ARGUMENT);
}
