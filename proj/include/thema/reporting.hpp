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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thema/coding.hpp"
#include "thema/evaluation.hpp"
#include "thema/theming.hpp"

namespace thema {

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Header row is an empty cell followed by the column labels; each data row
/// is the row label followed by values with 4 decimals. CRLF line ends.
std::string matrix_csv(const SimilarityMatrix& m);
void export_matrix_csv(const SimilarityMatrix& m,
                       const std::filesystem::path& path);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

/// "#rrggbb" or "rrggbb".
Rgb parse_hex_color(std::string_view hex);
std::string to_hex(Rgb c);

/// Anchors for -1, 0 and +1; values in between are interpolated linearly
/// per channel and rounded to the nearest integer.
struct ColorScale {
  Rgb negative{0xff, 0x00, 0x00};
  Rgb zero{0xff, 0xff, 0xff};
  Rgb positive{0x00, 0x00, 0xff};

  Rgb at(double value) const;
};

/// Deterministic SVG: no timestamps, fixed number formatting.
std::string heatmap_svg(const SimilarityMatrix& m,
                        const ColorScale& scale = {},
                        std::string_view title = {});
void render_heatmap_svg(const SimilarityMatrix& m,
                        const std::filesystem::path& path,
                        const ColorScale& scale = {},
                        std::string_view title = {});

std::string stability_markdown(const StabilityReport& report);
std::string diagonal_markdown(const DiagonalReport& report);

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

/// "20261019T101500Z-3fa9c1"
std::string make_run_id();

struct PhaseStats {
  std::int64_t duration_ms = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t requests = 0;
  std::int64_t retries = 0;
};

struct RunManifest {
  std::string run_id;
  std::string created_at;
  std::string updated_at;
  nlohmann::json config_snapshot = nlohmann::json::object();
  std::map<std::string, std::string> prompt_fingerprints;  // phase -> sha256
  std::map<std::string, std::string> model_ids;            // phase -> model
  std::vector<double> temperatures;
  std::map<std::string, std::string> file_index;  // name -> path in run dir
  std::map<std::string, PhaseStats> phases;
  std::vector<std::string> failures;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// Loads `<run_dir>/manifest.json` if present, else a fresh manifest.
RunManifest load_or_create_manifest(const std::filesystem::path& run_dir,
                                    const std::string& run_id);

/// Verifies every indexed file exists, then writes manifest.json atomically.
void write_manifest(const RunManifest& m, const std::filesystem::path& run_dir);

/// Thread-safe event log for a run, flushed to `<run_dir>/run.log`.
class RunLog {
 public:
  void add(std::string_view line);
  std::vector<std::string> lines() const;
  std::string text() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
};

struct EvaluationArtifact {
  std::string name;
  std::string csv_path;
  std::string svg_path;
  std::optional<DiagonalReport> diagonal;
  std::string text_mode;
  std::vector<std::string> unmatched;
};

struct RunSummaryInputs {
  std::optional<std::size_t> transcript_count;
  std::optional<Codebook> codebook;
  std::optional<SaturationReport> saturation;
  std::optional<double> quote_audit;
  std::vector<ThemeSet> theme_sets;
  std::optional<StabilityReport> stability;
  std::vector<EvaluationArtifact> evaluations;
  std::optional<HumanScoreIngest> human_scores;
  std::vector<std::string> failures;
  std::vector<std::string> notes;
};

std::string run_summary_markdown(const RunManifest& manifest,
                                 const RunSummaryInputs& inputs);

/// Writes `<run_dir>/summary.md` and returns its path.
std::filesystem::path write_run_summary(const RunManifest& manifest,
                                        const RunSummaryInputs& inputs,
                                        const std::filesystem::path& run_dir);

}  // namespace thema
