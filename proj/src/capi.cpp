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

#include "fedamole/fedamole.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>
#include <vector>

#include "fedamole/config.hpp"
#include "fedamole/error.hpp"
#include "fedamole/evalkit.hpp"
#include "fedamole/experiment.hpp"
#include "fedamole/rsea.hpp"

struct fam_config {
  fedamole::ExperimentConfig cfg;
};

struct fam_metric_log {
  fedamole::MetricLog log;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_key;

fam_status StatusFor(fedamole::ErrorKind kind) {
  using fedamole::ErrorKind;
  switch (kind) {
    case ErrorKind::kInvalidArgument: return FAM_ERR_INVALID_ARGUMENT;
    case ErrorKind::kDimension: return FAM_ERR_DIMENSION;
    case ErrorKind::kConfig: return FAM_ERR_CONFIG;
    case ErrorKind::kConfigIo: return FAM_ERR_CONFIG_IO;
    case ErrorKind::kConfigParse: return FAM_ERR_CONFIG_PARSE;
    case ErrorKind::kInfeasible: return FAM_ERR_INFEASIBLE;
    case ErrorKind::kProtocol: return FAM_ERR_PROTOCOL;
    case ErrorKind::kData: return FAM_ERR_DATA;
  }
  return FAM_ERR_INTERNAL;
}

fam_status Fail(fam_status status, std::string message, std::string key = {}) {
  g_last_error = std::move(message);
  g_last_key = std::move(key);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
fam_status Guard(F&& body) {
  try {
    g_last_error.clear();
    g_last_key.clear();
    return body();
  } catch (const fedamole::ConfigError& e) {
    return Fail(StatusFor(e.kind()), e.what(), e.key_path());
  } catch (const fedamole::Error& e) {
    return Fail(StatusFor(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return Fail(FAM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(FAM_ERR_INTERNAL, e.what());
  } catch (...) {
    return Fail(FAM_ERR_INTERNAL, "unknown exception");
  }
}

fam_status Null(const char* what) {
  return Fail(FAM_ERR_INVALID_ARGUMENT, std::string(what) + " is NULL");
}

char* CopyString(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bool ToMode(fam_mode mode, fedamole::Mode* out) {
  const auto all = fedamole::AllModes();
  const auto i = static_cast<std::size_t>(mode);
  if (mode < 0 || i >= all.size()) return false;
  *out = all[i];
  return true;
}

fam_status CheckRound(const fam_metric_log* log, size_t round, size_t client) {
  if (log == nullptr) return Null("log");
  if (round < 1 || round > log->log.records().size()) {
    return Fail(FAM_ERR_INVALID_ARGUMENT,
                "round " + std::to_string(round) + " not in log");
  }
  if (client >= log->log.records()[round - 1].accuracy.size()) {
    return Fail(FAM_ERR_INVALID_ARGUMENT,
                "client " + std::to_string(client) + " not in log");
  }
  return FAM_OK;
}

}  // namespace

extern "C" {

const char* fam_version(void) { return "0.1.0"; }

const char* fam_status_string(fam_status status) {
  switch (status) {
    case FAM_OK: return "ok";
    case FAM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FAM_ERR_DIMENSION: return "dimension mismatch";
    case FAM_ERR_CONFIG: return "invalid config value";
    case FAM_ERR_CONFIG_IO: return "config file not readable";
    case FAM_ERR_CONFIG_PARSE: return "malformed config";
    case FAM_ERR_INFEASIBLE: return "infeasible assignment constraints";
    case FAM_ERR_PROTOCOL: return "protocol violation";
    case FAM_ERR_DATA: return "data error";
    case FAM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fam_last_error(void) { return g_last_error.c_str(); }
const char* fam_last_error_key(void) { return g_last_key.c_str(); }

void fam_string_free(char* s) { delete[] s; }

fam_status fam_config_default(fam_config** out) {
  if (out == nullptr) return Null("out");
  return Guard([&] {
    *out = new fam_config{};
    return FAM_OK;
  });
}

fam_status fam_config_load(const char* path, fam_config** out) {
  if (path == nullptr) return Null("path");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    *out = new fam_config{fedamole::LoadConfig(path)};
    return FAM_OK;
  });
}

fam_status fam_config_parse(const char* json_text, fam_config** out) {
  if (json_text == nullptr) return Null("json_text");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    *out = new fam_config{fedamole::ParseConfig(json_text)};
    return FAM_OK;
  });
}

fam_status fam_config_set_json(fam_config* cfg, const char* json_text) {
  if (cfg == nullptr) return Null("cfg");
  if (json_text == nullptr) return Null("json_text");
  return Guard([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw fedamole::ConfigError(fedamole::ErrorKind::kConfigParse, "",
                                  e.what());
    }
    fedamole::ExperimentConfig next = cfg->cfg;
    fedamole::ApplyJson(next, j);
    next.Validate();
    cfg->cfg = std::move(next);
    return FAM_OK;
  });
}

fam_status fam_config_to_json(const fam_config* cfg, char** out_json) {
  if (cfg == nullptr) return Null("cfg");
  if (out_json == nullptr) return Null("out_json");
  return Guard([&] {
    *out_json = CopyString(fedamole::ToJson(cfg->cfg).dump(2));
    return FAM_OK;
  });
}

void fam_config_free(fam_config* cfg) { delete cfg; }

const char* fam_config_output_dir(const fam_config* cfg) {
  return cfg == nullptr ? "" : cfg->cfg.output_dir.c_str();
}

fam_status fam_mode_from_string(const char* name, fam_mode* out) {
  if (name == nullptr) return Null("name");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    const fedamole::Mode mode = fedamole::ParseMode(name);
    const auto all = fedamole::AllModes();
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i] == mode) *out = static_cast<fam_mode>(i);
    return FAM_OK;
  });
}

const char* fam_mode_name(fam_mode mode) {
  fedamole::Mode m;
  if (!ToMode(mode, &m)) return nullptr;
  return fedamole::ModeName(m).data();
}

fam_status fam_run_training(const fam_config* cfg, fam_mode mode,
                            uint64_t seed, fam_metric_log** out) {
  if (cfg == nullptr) return Null("cfg");
  if (out == nullptr) return Null("out");
  fedamole::Mode m;
  if (!ToMode(mode, &m)) return Fail(FAM_ERR_INVALID_ARGUMENT, "unknown mode");
  return Guard([&] {
    fedamole::ConfigureLogging();
    auto result = fedamole::RunSingle(cfg->cfg, m, seed);
    *out = new fam_metric_log{std::move(result.log)};
    return FAM_OK;
  });
}

size_t fam_metric_log_rounds(const fam_metric_log* log) {
  return log == nullptr ? 0 : log->log.records().size();
}

size_t fam_metric_log_clients(const fam_metric_log* log) {
  if (log == nullptr || log->log.empty()) return 0;
  return log->log.records().front().accuracy.size();
}

fam_status fam_metric_log_accuracy(const fam_metric_log* log, size_t round,
                                   size_t client, double* out) {
  if (out == nullptr) return Null("out");
  if (fam_status s = CheckRound(log, round, client); s != FAM_OK) return s;
  *out = log->log.records()[round - 1].accuracy[client];
  return FAM_OK;
}

fam_status fam_metric_log_loss(const fam_metric_log* log, size_t round,
                               size_t client, double* out) {
  if (out == nullptr) return Null("out");
  if (fam_status s = CheckRound(log, round, client); s != FAM_OK) return s;
  *out = log->log.records()[round - 1].loss[client];
  return FAM_OK;
}

fam_status fam_metric_log_mta(const fam_metric_log* log, size_t round,
                              double* out) {
  if (log == nullptr) return Null("log");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    *out = fedamole::Mta(log->log, static_cast<int>(round));
    return FAM_OK;
  });
}

fam_status fam_metric_log_mtal(const fam_metric_log* log, double* out) {
  if (log == nullptr) return Null("log");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    *out = fedamole::Mtal(log->log);
    return FAM_OK;
  });
}

void fam_metric_log_free(fam_metric_log* log) { delete log; }

fam_status fam_experiment_run(const fam_config* cfg, const fam_mode* modes,
                              size_t n_modes, const uint64_t* seeds,
                              size_t n_seeds, const char* out_dir) {
  if (cfg == nullptr) return Null("cfg");
  if (modes == nullptr || n_modes == 0) return Null("modes");
  if (seeds == nullptr && n_seeds > 0) return Null("seeds");
  std::vector<fedamole::Mode> mode_list;
  for (size_t i = 0; i < n_modes; ++i) {
    fedamole::Mode m;
    if (!ToMode(modes[i], &m)) {
      return Fail(FAM_ERR_INVALID_ARGUMENT, "unknown mode");
    }
    mode_list.push_back(m);
  }
  return Guard([&] {
    fedamole::ConfigureLogging();
    std::vector<std::uint64_t> seed_list =
        n_seeds > 0 ? std::vector<std::uint64_t>(seeds, seeds + n_seeds)
                    : cfg->cfg.seeds;
    const std::filesystem::path dir =
        out_dir != nullptr ? out_dir : cfg->cfg.output_dir;
    fedamole::RunExperiment(cfg->cfg, mode_list, seed_list, dir);
    return FAM_OK;
  });
}

fam_status fam_report(const char* const* csv_paths, size_t n_paths,
                      char** out_text) {
  if (csv_paths == nullptr || n_paths == 0) return Null("csv_paths");
  if (out_text == nullptr) return Null("out_text");
  return Guard([&] {
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n_paths; ++i) {
      if (csv_paths[i] == nullptr) return Null("csv_paths[i]");
      paths.emplace_back(csv_paths[i]);
    }
    const auto rows = fedamole::ReportFromFiles(paths);
    *out_text = CopyString(fedamole::FormatReport(rows));
    return FAM_OK;
  });
}

fam_status fam_solve_assignment(const double* probabilities, size_t clients,
                                size_t experts, size_t k_e, size_t k_c,
                                size_t b, uint8_t* out_matrix,
                                double* out_objective) {
  if (probabilities == nullptr) return Null("probabilities");
  if (out_matrix == nullptr) return Null("out_matrix");
  return Guard([&] {
    fedamole::AssignmentProblem problem{
        fedamole::Tensor({clients, experts},
                         std::vector<double>(probabilities,
                                             probabilities + clients * experts)),
        k_e, k_c, b};
    const fedamole::AssignmentMatrix d = fedamole::SolveAssignment(problem);
    std::memcpy(out_matrix, d.cells().data(), d.cells().size());
    if (out_objective != nullptr) {
      *out_objective = fedamole::Objective(problem.probabilities, d);
    }
    return FAM_OK;
  });
}

fam_status fam_rouge_l(const int32_t* hypothesis, size_t n_hypothesis,
                       const int32_t* reference, size_t n_reference,
                       double* out) {
  if (hypothesis == nullptr && n_hypothesis > 0) return Null("hypothesis");
  if (reference == nullptr && n_reference > 0) return Null("reference");
  if (out == nullptr) return Null("out");
  return Guard([&] {
    std::vector<int> h(hypothesis, hypothesis + n_hypothesis);
    std::vector<int> r(reference, reference + n_reference);
    *out = fedamole::RougeL(h, r);
    return FAM_OK;
  });
}

}  // extern "C"
