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

// fedamole command line: `run` trains modes over seeds, `report` summarizes
// one or more summary.csv files.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedamole/fedamole.h"

namespace {

int Report(fam_status status, const char* context) {
  if (status == FAM_OK) return 0;
  std::fprintf(stderr, "fedamole: %s: %s: %s\n", context,
               fam_status_string(status), fam_last_error());
  return static_cast<int>(status);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int PrintReport(const std::vector<std::string>& paths) {
  std::vector<const char*> raw;
  for (const auto& p : paths) raw.push_back(p.c_str());
  char* text = nullptr;
  if (int rc = Report(fam_report(raw.data(), raw.size(), &text), "report")) {
    return rc;
  }
  std::fputs(text, stdout);
  fam_string_free(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedamole: federated mixture-of-LoRA-experts simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fam_version());

  std::string config_path;
  std::string modes_arg = "fedamole";
  std::string seeds_arg;
  std::string out_dir;
  CLI::App* run = app.add_subcommand("run", "train modes over seeds");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--mode", modes_arg,
                  "fedamole|fedit|fedit_ft|ablate-h|ablate-s|ablate-r|random; "
                  "comma-separated for several")
      ->capture_default_str();
  run->add_option("--seeds", seeds_arg, "comma-separated seeds (default: "
                                        "config seeds)");
  run->add_option("--out", out_dir, "output directory (default: output.dir)");

  std::vector<std::string> summaries;
  CLI::App* report =
      app.add_subcommand("report", "mean/std MTAL per mode from summary CSVs");
  report->add_option("--summary", summaries, "summary.csv path(s)")
      ->required()
      ->expected(1, -1);

  CLI11_PARSE(app, argc, argv);

  if (*report) return PrintReport(summaries);

  std::vector<fam_mode> modes;
  for (const std::string& name : SplitList(modes_arg)) {
    fam_mode m;
    if (int rc = Report(fam_mode_from_string(name.c_str(), &m), "--mode")) {
      return rc;
    }
    modes.push_back(m);
  }
  if (modes.empty()) {
    std::fprintf(stderr, "fedamole: --mode: no modes given\n");
    return static_cast<int>(FAM_ERR_INVALID_ARGUMENT);
  }
  std::vector<std::uint64_t> seeds;
  for (const std::string& s : SplitList(seeds_arg)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(s, &used));
      if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
    } catch (const std::exception&) {
      std::fprintf(stderr, "fedamole: --seeds: '%s' is not a seed\n",
                   s.c_str());
      return static_cast<int>(FAM_ERR_INVALID_ARGUMENT);
    }
  }

  fam_config* cfg = nullptr;
  if (int rc = Report(fam_config_load(config_path.c_str(), &cfg), "config")) {
    if (*fam_last_error_key() != '\0') {
      std::fprintf(stderr, "fedamole: offending key: %s\n",
                   fam_last_error_key());
    }
    return rc;
  }
  const fam_status st = fam_experiment_run(
      cfg, modes.data(), modes.size(), seeds.empty() ? nullptr : seeds.data(),
      seeds.size(), out_dir.empty() ? nullptr : out_dir.c_str());
  if (int rc = Report(st, "run")) {
    fam_config_free(cfg);
    return rc;
  }
  const std::string dir =
      out_dir.empty() ? fam_config_output_dir(cfg) : out_dir;
  fam_config_free(cfg);
  return PrintReport({dir + "/summary.csv"});
}
