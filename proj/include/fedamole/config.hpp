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
#include <string>
#include <string_view>
#include <vector>

#include "fedamole/backbone.hpp"
#include "fedamole/data.hpp"
#include "fedamole/fedsim.hpp"
#include "json.hpp"

namespace fedamole {

struct DataOptions {
  CorpusConfig corpus;  // corpus.vocab_size mirrors backbone.vocab_size
  PartitionKind partition = PartitionKind::kTaskSkew;
  double alpha = 0.5;   // Dirichlet concentration

  friend bool operator==(const DataOptions&, const DataOptions&) = default;
};

struct ExperimentConfig {
  BackboneConfig backbone;
  DataOptions data;
  FLConfig federation;
  std::string output_dir = "results";
  std::vector<std::uint64_t> seeds = {42, 62, 82};

  // Cross-field checks; throws ConfigError naming the key.
  void Validate() const;
  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

std::string_view PartitionName(PartitionKind kind);
PartitionKind ParsePartition(std::string_view name);

// Overlays the keys present in `j` onto `cfg`. Unknown keys and wrong types
// raise ConfigError(kConfig) with the dotted key path. Does not validate.
void ApplyJson(ExperimentConfig& cfg, const nlohmann::json& j);

// Defaults, overlaid with `text`, validated. Blank text gives the defaults.
// Syntax errors raise ConfigError(kConfigParse).
ExperimentConfig ParseConfig(std::string_view text);
// Missing or unreadable files raise ConfigError(kConfigIo).
ExperimentConfig LoadConfig(const std::filesystem::path& path);

nlohmann::json ToJson(const ExperimentConfig& cfg);

}  // namespace fedamole
