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
#include <utility>
#include <vector>

#include "thema/coding.hpp"
#include "thema/llm.hpp"

namespace thema {

/// Items to embed. `text` is the exact string sent to the embedder, so the
/// name-only vs name+description choice is made when building the set.
struct LabeledTextSet {
  struct Item {
    std::string label;
    std::string text;
  };
  std::string id;
  std::vector<Item> items;
};

/// Throws UsageError on an empty set or duplicate labels.
void validate(const LabeledTextSet& set);

struct SimilarityMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;  // [row][col], each in [-1, 1]
  std::string embedder_id;

  std::size_t rows() const noexcept { return row_labels.size(); }
  std::size_t cols() const noexcept { return col_labels.size(); }
  double at(std::size_t r, std::size_t c) const { return values.at(r).at(c); }
};

/// Throws UsageError when dimensions disagree with the labels or a value
/// lies outside [-1, 1].
void validate(const SimilarityMatrix& m);

enum class AlignmentSource { kManualFile, kGreedyAuto };

struct PairAlignment {
  std::vector<std::pair<std::string, std::string>> pairs;  // (row, col)
  AlignmentSource source = AlignmentSource::kManualFile;
};

struct HumanScore {
  std::string row_label;
  std::string col_label;
  double score = 0.0;  // [0, 10]
  double normalized() const { return score / 10.0; }
};

struct HumanScoreSet {
  std::vector<HumanScore> scores;  // in alignment order
  std::string rater_id;
};

/// dot(a, b) / (|a| |b|). Results within 1e-9 outside [-1, 1] are clamped;
/// anything further out is an error. Throws UsageError on a dimension
/// mismatch or a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Clamps to [-1, 1] when within 1e-9 of the range; throws otherwise.
double clamp_similarity(double v);

/// Embeds rows and cols in two batches; values[i][j] = cosine(row i, col j).
SimilarityMatrix similarity_matrix(const LabeledTextSet& rows,
                                   const LabeledTextSet& cols,
                                   EmbeddingProvider& embedder);

/// Resolves a label against a list: exact match first, then ignoring a
/// leading "Tema N:" / "Theme N:" prefix and surrounding whitespace.
std::optional<std::size_t> find_label(const std::vector<std::string>& labels,
                                      const std::string& wanted);

/// Reads a `row_label,col_label` CSV (header optional). An empty col_label
/// marks a row deliberately left unpaired. Labels are checked against the
/// given lists and returned in their canonical spelling.
struct ManualPairs {
  PairAlignment alignment;
  std::vector<std::string> unpaired_rows;  // rows listed with an empty col
};
ManualPairs load_manual_pairs(const std::filesystem::path& file,
                              const std::vector<std::string>& row_labels,
                              const std::vector<std::string>& col_labels);

/// Repeatedly takes the largest unused cell. Ties go to the lowest row
/// index, then the lowest column index.
PairAlignment align_greedy(const SimilarityMatrix& m);

struct DiagonalEntry {
  std::string row_label;
  std::string col_label;
  double score = 0.0;
  bool below_threshold = false;
};

struct DiagonalReport {
  std::vector<DiagonalEntry> entries;
  double threshold = 0.0;
  std::size_t at_or_above = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;

  std::vector<DiagonalEntry> flagged() const;
  /// e.g. "6/7 above 0.6" (counts scores >= threshold).
  std::string summary() const;
};

DiagonalReport diagonal_report(const SimilarityMatrix& m,
                               const PairAlignment& alignment,
                               double threshold);

/// Places paired labels first, in pair order, followed by the remaining
/// labels in their original order.
SimilarityMatrix arrange_by_pairs(const SimilarityMatrix& m,
                                  const PairAlignment& alignment);

struct CodebookComparison {
  SimilarityMatrix matrix;  // arranged so paired codes form the diagonal
  PairAlignment alignment;
  DiagonalReport diagonal;
  std::vector<std::string> unmatched_rows;
  std::vector<std::string> unmatched_cols;
};

/// Code names of `cb` as a text set; repeated names get a " [index]" suffix
/// so labels stay unique.
LabeledTextSet code_name_set(const Codebook& cb, std::string id);

/// Rows are codebook A's code names, cols codebook B's. With a pair file the
/// columns follow the pair order; without one a greedy alignment is used.
CodebookComparison compare_codebooks(
    const Codebook& a, const Codebook& b, EmbeddingProvider& embedder,
    const std::optional<std::filesystem::path>& manual_pairs = std::nullopt,
    double threshold = 0.6);

struct HumanScoreSummary {
  std::size_t count = 0;
  std::size_t at_maximum = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  /// e.g. "2 at maximum, min 8"
  std::string text() const;
};

struct HumanScoreIngest {
  HumanScoreSet set;
  SimilarityMatrix overlay;  // scored pairs, normalized scores on the diagonal
  HumanScoreSummary summary;
};

/// Reads a `row_label,col_label,score` CSV and joins it to `alignment`.
/// Throws on a score outside [0, 10] or a pair not in the alignment.
HumanScoreIngest ingest_human_scores(const std::filesystem::path& file,
                                     const PairAlignment& alignment,
                                     std::string rater_id = "rater-1");

}  // namespace thema
