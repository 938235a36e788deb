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

#include <stdexcept>
#include <string>

namespace fedamole {

// Error categories surfaced through the C API as distinct status codes.
enum class ErrorKind {
  kInvalidArgument,
  kDimension,
  kConfig,
  kConfigIo,
  kConfigParse,
  kInfeasible,
  kProtocol,
  kData,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::kDimension, what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what)
      : Error(ErrorKind::kInfeasible, what) {}
};

// Config errors carry the dotted key path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(ErrorKind kind, std::string key_path, const std::string& what)
      : Error(kind, key_path.empty() ? what : key_path + ": " + what),
        key_path_(std::move(key_path)) {}

  [[nodiscard]] const std::string& key_path() const noexcept {
    return key_path_;
  }

 private:
  std::string key_path_;
};

}  // namespace fedamole
