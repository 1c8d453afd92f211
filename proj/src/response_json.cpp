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

#include "thema/response_json.hpp"

#include <algorithm>
#include <cctype>

namespace thema {

using json = nlohmann::json;

namespace {

std::optional<json> try_parse(std::string_view s) {
  json doc = json::parse(s.begin(), s.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !(doc.is_object() || doc.is_array())) {
    return std::nullopt;
  }
  return doc;
}

// End offset (exclusive) of the balanced region opening at `start`, honoring
// JSON string literals. npos when unbalanced.
std::size_t balanced_end(std::string_view s, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        break;
      case '{':
        stack.push_back('}');
        break;
      case '[':
        stack.push_back(']');
        break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default:
        break;
    }
  }
  return std::string_view::npos;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::optional<ExtractedJson> extract_json(std::string_view raw) {
  if (auto doc = try_parse(raw)) return ExtractedJson{*std::move(doc), JsonRecovery::kAsIs};

  std::size_t pos = 0;
  while ((pos = raw.find("```", pos)) != std::string_view::npos) {
    auto body_start = raw.find('\n', pos + 3);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    const auto close = raw.find("```", body_start);
    if (close == std::string_view::npos) break;
    if (auto doc = try_parse(raw.substr(body_start, close - body_start))) {
      return ExtractedJson{*std::move(doc), JsonRecovery::kFenced};
    }
    pos = close + 3;
  }

  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '{' && raw[i] != '[') continue;
    const auto end = balanced_end(raw, i);
    if (end == std::string_view::npos) continue;
    if (auto doc = try_parse(raw.substr(i, end - i))) {
      return ExtractedJson{*std::move(doc), JsonRecovery::kBalancedRegion};
    }
  }
  return std::nullopt;
}

const json* find_member(const json& object,
                        std::initializer_list<std::string_view> keys) {
  if (!object.is_object()) return nullptr;
  for (const auto key : keys) {
    if (key.empty()) continue;
    if (auto it = object.find(std::string(key)); it != object.end()) return &*it;
    for (auto it = object.begin(); it != object.end(); ++it) {
      if (iequals(it.key(), key)) return &it.value();
    }
  }
  return nullptr;
}

const json* find_member(const json& object,
                        const std::vector<std::string>& keys) {
  if (!object.is_object()) return nullptr;
  for (const auto& key : keys) {
    if (const json* found = find_member(object, {std::string_view(key)})) {
      return found;
    }
  }
  return nullptr;
}

}  // namespace thema
