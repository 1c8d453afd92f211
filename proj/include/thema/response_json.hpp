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

#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace thema {

/// How a JSON document was recovered from a model response.
enum class JsonRecovery { kAsIs, kFenced, kBalancedRegion };

struct ExtractedJson {
  nlohmann::json value;
  JsonRecovery recovery = JsonRecovery::kAsIs;
};

/// Repair ladder: parse the whole response; else the contents of the first
/// ``` fenced block that parses; else the first balanced {...} or [...]
/// region (string-aware) that parses. nullopt when nothing parses.
std::optional<ExtractedJson> extract_json(std::string_view raw);

/// Case-insensitive member lookup trying `keys` in order. Empty keys are
/// skipped.
const nlohmann::json* find_member(const nlohmann::json& object,
                                  std::initializer_list<std::string_view> keys);
const nlohmann::json* find_member(const nlohmann::json& object,
                                  const std::vector<std::string>& keys);

}  // namespace thema
