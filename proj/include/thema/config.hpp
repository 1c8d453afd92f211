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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace thema {

struct ChatEndpointConfig {
  std::string provider = "openai";  // "openai" or "mock"
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string coding_model = "gpt-3.5-turbo";
  std::string theming_model = "gpt-4-turbo";
  std::string fixtures;  // mock only: directory holding fixtures.json
  double requests_per_minute = 30.0;
  int timeout_s = 120;
  int max_output_tokens = 4096;
};

struct EmbedEndpointConfig {
  std::string provider = "openai";  // "openai" or "mock"
  std::string url = "https://api.openai.com/v1/embeddings";
  std::string model = "text-embedding-3-small";
  std::size_t dimension = 512;  // mock only
  double requests_per_minute = 60.0;
  int timeout_s = 120;
};

struct RunConfig {
  std::string corpus_dir;
  std::string language = "it";
  std::string output_root = "runs";
  ChatEndpointConfig chat;
  EmbedEndpointConfig embedding;
  double coding_temperature = 0.0;
  double theming_temperature = 0.0;
  std::vector<double> sweep_temperatures{0.25, 0.5, 0.75};
  std::size_t min_themes = 9;
  double stability_threshold = 0.7;
  double diagonal_threshold = 0.6;
  std::size_t parallelism = 4;
  std::string coding_template;   // builtin id or file; empty means "<lang>-coding"
  std::string theming_template;  // empty means "<lang>-theming"
  std::string embed_text = "names";  // "names" or "names+descriptions"
  std::string reference;  // optional reference categories CSV
  std::string pairs;      // optional manual pairs CSV
  std::string scores;     // optional human scores CSV

  std::string coding_template_ref() const;
  std::string theming_template_ref() const;
};

/// Throws UsageError naming the offending field.
void validate(const RunConfig& config);

/// Overlays a JSON document onto `config`. Relative paths in the document
/// are resolved against `base_dir`. Unknown keys are rejected.
void apply_config_json(RunConfig& config, const nlohmann::json& doc,
                       const std::filesystem::path& base_dir);

/// Reads and applies a config file.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Resolved configuration in the same shape the file accepts. Never holds
/// credentials: keys only come from the environment.
nlohmann::json to_json(const RunConfig& config);

/// "0.25,0.5,0.75" -> {0.25, 0.5, 0.75}.
std::vector<double> parse_temperature_list(const std::string& s);

}  // namespace thema
