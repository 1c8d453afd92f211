// Copyright 2026 The Thema Authors.
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
#include <vector>

namespace thema {

/// Process exit codes used by the CLI. Every Error maps onto one of these.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kProvider = 2,
  kParse = 3,
};

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kUsage)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad input: invalid arguments, malformed files, violated preconditions.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// Filesystem failure (missing path, unreadable file, failed write).
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// Chat or embedding endpoint failure.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, bool retryable = false)
      : Error(what, ExitCode::kProvider), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// A model response (or stored artifact) could not be interpreted.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what, ExitCode::kParse) {}
};

/// Collects non-fatal findings (soft limit violations, dropped indices...).
/// Not synchronized; give each worker its own instance and merge.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  void merge(const Diagnostics& other) {
    warnings.insert(warnings.end(), other.warnings.begin(),
                    other.warnings.end());
  }
  bool empty() const noexcept { return warnings.empty(); }
};

}  // namespace thema
