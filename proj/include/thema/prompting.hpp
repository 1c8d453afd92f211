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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "thema/error.hpp"
#include "thema/initial_code.hpp"

namespace thema {

enum class Phase { kCoding, kTheming };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view s);

/// Maps the JSON keys a template asks the model for onto canonical fields.
/// Coding templates use name/description/quote; theming templates use
/// name/description/indices.
struct OutputKeyMap {
  std::string container;
  std::string name;
  std::string description;
  std::string quote;
  std::string indices;

  bool operator==(const OutputKeyMap&) const = default;
};

struct PromptTemplate {
  std::string id;  // e.g. "it-coding"; file stem for user templates
  Phase phase = Phase::kCoding;
  std::string language;
  std::string body;
  OutputKeyMap keys;

  bool operator==(const PromptTemplate&) const = default;
};

inline constexpr std::string_view kTextVar = "testo";
inline constexpr std::string_view kCodesListVar = "codes_list";
inline constexpr std::string_view kMinThemesVar = "min_themes";

/// Embedded templates: it-coding, it-theming, en-coding, en-theming.
const std::vector<PromptTemplate>& builtin_templates();

/// Looks up a builtin by id. Throws UsageError listing the known ids.
const PromptTemplate& builtin_template(std::string_view id);

/// Throws UsageError when the template's placeholders or key map do not fit
/// its phase.
void validate(const PromptTemplate& tpl);

/// Placeholder names in document order (duplicates kept).
std::vector<std::string> placeholders(std::string_view body);

/// Substitutes `{name}` placeholders. Values are inserted verbatim and never
/// re-expanded. A missing binding throws UsageError naming the placeholder;
/// bindings the body does not use are reported as warnings when `diag` is
/// given.
std::string render(const PromptTemplate& tpl,
                   const std::map<std::string, std::string>& bindings,
                   Diagnostics* diag = nullptr);

/// `[i]: name. description. quote` per code, joined by ", ".
/// Indices must be contiguous from 0.
std::string format_code_list(const std::vector<InitialCode>& codes);

/// Parses the template file format:
///
///   phase: coding
///   language: it
///   keys: Categorie=container, nome=name, descrizione=description, citazione=quote
///   ---
///   <body>
PromptTemplate parse_template(std::string_view content, std::string id);
PromptTemplate load_template(const std::filesystem::path& path);
std::string serialize_template(const PromptTemplate& tpl);

/// A builtin id or a path to a template file.
PromptTemplate resolve_template(const std::string& ref);

}  // namespace thema
