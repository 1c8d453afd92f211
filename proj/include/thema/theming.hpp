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
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thema/coding.hpp"
#include "thema/error.hpp"
#include "thema/llm.hpp"
#include "thema/prompting.hpp"

namespace thema {

struct Theme {
  std::string name;
  std::string description;
  std::vector<std::size_t> code_indices;

  bool operator==(const Theme&) const = default;
};

struct ThemeSet {
  std::string run_id;
  double temperature = 0.0;
  std::size_t min_themes = 9;
  std::vector<Theme> themes;
  std::string raw_response_path;
  std::vector<std::string> warnings;  // e.g. below minimum, dropped indices

  bool operator==(const ThemeSet&) const = default;
};

/// Strips "Tema N:" / "Theme N." style numbering and markdown emphasis.
std::string clean_theme_name(std::string_view name);

/// Accepts a JSON document (list of themes or an object holding one) and
/// falls back to a line-oriented reading of "Tema N: name" headers, the
/// following description paragraph and a "Categorie: 0, 3" index line.
/// Indices are not range-checked here. Throws ResponseParseError when no
/// theme is recognized.
std::vector<Theme> parse_theme_response(std::string_view raw,
                                        const OutputKeyMap* keys = nullptr,
                                        Diagnostics* diag = nullptr);

struct ThemingOptions {
  std::string model;
  double temperature = 0.0;
  std::size_t min_themes = 9;
  int max_output_tokens = 4096;
  std::string run_id;
  std::size_t max_parallel = 4;
};

struct ThemeRun {
  ThemeSet set;
  std::string raw_response;
  ChatResponse response;
  std::string prompt;
};

/// Renders the theming prompt for `cb`.
std::string render_theming_prompt(const Codebook& cb, const PromptTemplate& tpl,
                                  std::size_t min_themes);

/// Phases 3-4 for one temperature. Out-of-range and duplicate indices are
/// dropped with a warning; a theme left with no index is dropped too.
/// Fewer than min_themes themes is recorded as a warning.
ThemeRun generate_themes(const Codebook& cb, const PromptTemplate& tpl,
                         ChatProvider& provider, const ThemingOptions& options);

struct SweepOutcome {
  double temperature = 0.0;
  std::optional<ThemeRun> run;
  std::string error;  // set when run is empty
  std::string raw_response;
  ExitCode code = ExitCode::kOk;
};

/// One generate_themes call per temperature, in input order. A failed
/// temperature is recorded and does not stop the others.
std::vector<SweepOutcome> sweep_temperatures(const Codebook& cb,
                                             const PromptTemplate& tpl,
                                             ChatProvider& provider,
                                             const std::vector<double>& temps,
                                             const ThemingOptions& options);

struct StabilityMember {
  std::size_t run = 0;    // index into StabilityReport::runs
  std::size_t theme = 0;  // index within that run's ThemeSet
  std::string name;

  bool operator==(const StabilityMember&) const = default;
};

struct PairScore {
  std::size_t a = 0;  // member positions within the cluster
  std::size_t b = 0;
  double score = 0.0;
};

struct StabilityCluster {
  std::string name;  // from the lowest-temperature member
  std::vector<StabilityMember> members;
  std::vector<PairScore> scores;
};

struct StabilityRun {
  std::string run_id;
  double temperature = 0.0;
};

struct StabilityReport {
  std::vector<StabilityRun> runs;  // ascending temperature
  std::vector<StabilityCluster> clusters;  // two or more members each
  std::vector<StabilityMember> singletons;
  double match_threshold = 0.7;
  std::string embedder_id;
};

/// The text embedded for a theme: "name: description".
std::string theme_embedding_text(const Theme& theme);

/// Greedy agglomerative matching across runs. Runs are visited by ascending
/// temperature. For each run, (theme, cluster) pairs whose best cosine to a
/// cluster member reaches `threshold` are assigned by descending score, each
/// cluster taking at most one theme per run; the rest seed new clusters.
/// Clusters that end with one member are reported as singletons.
StabilityReport stability(const std::vector<ThemeSet>& sets,
                          EmbeddingProvider& embedder, double threshold = 0.7);

nlohmann::json to_json(const ThemeSet& set);
ThemeSet theme_set_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StabilityReport& report);

void save_theme_set(const ThemeSet& set, const std::filesystem::path& path);
ThemeSet load_theme_set(const std::filesystem::path& path);

/// "themes_T0.json", "themes_T0.25.json", ...
std::string theme_set_filename(double temperature);

}  // namespace thema
