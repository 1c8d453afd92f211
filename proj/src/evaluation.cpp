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

#include "thema/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

#include "thema/csv.hpp"
#include "thema/text.hpp"

namespace thema {

namespace {

constexpr double kClampSlack = 1e-9;

std::string strip_numbering(std::string_view label) {
  label = text::trim(label);
  for (const std::string_view word : {"tema ", "theme "}) {
    if (!text::starts_with_icase(label, word)) continue;
    std::size_t i = word.size();
    const std::size_t digits = i;
    while (i < label.size() && label[i] >= '0' && label[i] <= '9') ++i;
    if (i == digits) break;
    while (i < label.size() && label[i] == ' ') ++i;
    if (i < label.size() && (label[i] == ':' || label[i] == '.' || label[i] == '-')) {
      return std::string(text::trim(label.substr(i + 1)));
    }
  }
  return std::string(label);
}

bool is_header(const csv::Row& row, std::initializer_list<std::string_view> names) {
  if (row.size() < names.size()) return false;
  std::size_t i = 0;
  for (const auto name : names) {
    if (text::trim(row[i++]) != name) return false;
  }
  return true;
}

}  // namespace

void validate(const LabeledTextSet& set) {
  if (set.items.empty()) {
    throw UsageError(fmt::format("text set '{}' is empty", set.id));
  }
  std::set<std::string> labels;
  for (const auto& item : set.items) {
    if (!labels.insert(item.label).second) {
      throw UsageError(fmt::format("text set '{}': duplicate label '{}'",
                                   set.id, item.label));
    }
  }
}

void validate(const SimilarityMatrix& m) {
  if (m.values.size() != m.row_labels.size()) {
    throw UsageError("similarity matrix: row count does not match labels");
  }
  for (const auto& row : m.values) {
    if (row.size() != m.col_labels.size()) {
      throw UsageError("similarity matrix: column count does not match labels");
    }
    for (const double v : row) {
      if (!(v >= -1.0 - kClampSlack && v <= 1.0 + kClampSlack)) {
        throw UsageError(fmt::format("similarity value {} outside [-1, 1]", v));
      }
    }
  }
}

double clamp_similarity(double v) {
  if (!(v >= -1.0 - kClampSlack && v <= 1.0 + kClampSlack)) {
    throw UsageError(fmt::format(
        "cosine {} is outside [-1, 1]; the embedder looks broken", v));
  }
  return std::clamp(v, -1.0, 1.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw UsageError(fmt::format("cosine: dimension mismatch ({} vs {})",
                                 a.size(), b.size()));
  }
  double dot = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw UsageError("cosine: zero vector");
  return clamp_similarity(dot / (std::sqrt(aa) * std::sqrt(bb)));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine(a.values(), b.values());
}

SimilarityMatrix similarity_matrix(const LabeledTextSet& rows,
                                   const LabeledTextSet& cols,
                                   EmbeddingProvider& embedder) {
  validate(rows);
  validate(cols);
  const auto texts = [](const LabeledTextSet& s) {
    std::vector<std::string> out;
    for (const auto& item : s.items) out.push_back(item.text);
    return out;
  };
  const auto row_vecs = embedder.embed(texts(rows));
  const auto col_vecs = embedder.embed(texts(cols));
  if (!row_vecs.empty() && !col_vecs.empty() &&
      row_vecs.front().dimension() != col_vecs.front().dimension()) {
    throw ProviderError("embedder returned different dimensions for rows and cols");
  }

  SimilarityMatrix m;
  m.embedder_id = embedder.id();
  for (const auto& item : rows.items) m.row_labels.push_back(item.label);
  for (const auto& item : cols.items) m.col_labels.push_back(item.label);
  m.values.assign(rows.items.size(), std::vector<double>(cols.items.size()));
  for (std::size_t r = 0; r < row_vecs.size(); ++r) {
    for (std::size_t c = 0; c < col_vecs.size(); ++c) {
      m.values[r][c] = cosine(row_vecs[r], col_vecs[c]);
    }
  }
  return m;
}

std::optional<std::size_t> find_label(const std::vector<std::string>& labels,
                                      const std::string& wanted) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == wanted) return i;
  }
  const std::string key = strip_numbering(wanted);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (strip_numbering(labels[i]) == key) return i;
  }
  return std::nullopt;
}

ManualPairs load_manual_pairs(const std::filesystem::path& file,
                              const std::vector<std::string>& row_labels,
                              const std::vector<std::string>& col_labels) {
  const auto rows = csv::read_file(file);
  ManualPairs out;
  out.alignment.source = AlignmentSource::kManualFile;
  std::set<std::string> used_rows;
  std::set<std::string> used_cols;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (r == 0 && is_header(row, {"row_label", "col_label"})) continue;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() < 2) {
      throw UsageError(fmt::format("{}: line {}: expected row_label,col_label",
                                   file.string(), r + 1));
    }
    const std::string wanted_row(text::trim(row[0]));
    const std::string wanted_col(text::trim(row[1]));
    const auto ri = find_label(row_labels, wanted_row);
    if (!ri) {
      throw UsageError(fmt::format(
          "{}: unknown row label '{}'\n  known rows: {}", file.string(),
          wanted_row, fmt::join(row_labels, " | ")));
    }
    const std::string& row_label = row_labels[*ri];
    if (!used_rows.insert(row_label).second) {
      throw UsageError(fmt::format("{}: row label '{}' paired twice",
                                   file.string(), row_label));
    }
    if (wanted_col.empty()) {
      out.unpaired_rows.push_back(row_label);
      continue;
    }
    const auto ci = find_label(col_labels, wanted_col);
    if (!ci) {
      throw UsageError(fmt::format(
          "{}: unknown column label '{}'\n  known columns: {}", file.string(),
          wanted_col, fmt::join(col_labels, " | ")));
    }
    const std::string& col_label = col_labels[*ci];
    if (!used_cols.insert(col_label).second) {
      throw UsageError(fmt::format("{}: column label '{}' paired twice",
                                   file.string(), col_label));
    }
    out.alignment.pairs.emplace_back(row_label, col_label);
  }
  return out;
}

PairAlignment align_greedy(const SimilarityMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw UsageError("greedy alignment needs a non-empty matrix");
  }
  PairAlignment out;
  out.source = AlignmentSource::kGreedyAuto;
  std::vector<bool> row_used(m.rows(), false);
  std::vector<bool> col_used(m.cols(), false);
  const std::size_t n = std::min(m.rows(), m.cols());
  for (std::size_t k = 0; k < n; ++k) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t br = 0;
    std::size_t bc = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (row_used[r]) continue;
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (col_used[c]) continue;
        // Strict comparison keeps the first (lowest row, then col) on ties.
        if (m.values[r][c] > best) {
          best = m.values[r][c];
          br = r;
          bc = c;
        }
      }
    }
    row_used[br] = true;
    col_used[bc] = true;
    out.pairs.emplace_back(m.row_labels[br], m.col_labels[bc]);
  }
  return out;
}

std::vector<DiagonalEntry> DiagonalReport::flagged() const {
  std::vector<DiagonalEntry> out;
  for (const auto& e : entries) {
    if (e.below_threshold) out.push_back(e);
  }
  return out;
}

std::string DiagonalReport::summary() const {
  return fmt::format("{}/{} above {}", at_or_above, entries.size(),
                     text::format_real(threshold));
}

DiagonalReport diagonal_report(const SimilarityMatrix& m,
                               const PairAlignment& alignment,
                               double threshold) {
  if (alignment.pairs.empty()) throw UsageError("diagonal report: empty alignment");
  DiagonalReport report;
  report.threshold = threshold;
  double sum = 0.0;
  report.min = std::numeric_limits<double>::infinity();
  report.max = -std::numeric_limits<double>::infinity();
  for (const auto& [row, col] : alignment.pairs) {
    const auto r = std::find(m.row_labels.begin(), m.row_labels.end(), row);
    const auto c = std::find(m.col_labels.begin(), m.col_labels.end(), col);
    if (r == m.row_labels.end()) {
      throw UsageError(fmt::format("diagonal report: row '{}' not in matrix", row));
    }
    if (c == m.col_labels.end()) {
      throw UsageError(fmt::format("diagonal report: column '{}' not in matrix", col));
    }
    const double score = m.at(static_cast<std::size_t>(r - m.row_labels.begin()),
                              static_cast<std::size_t>(c - m.col_labels.begin()));
    const bool below = score < threshold;
    if (!below) ++report.at_or_above;
    report.entries.push_back({row, col, score, below});
    sum += score;
    report.min = std::min(report.min, score);
    report.max = std::max(report.max, score);
  }
  report.mean = sum / static_cast<double>(report.entries.size());
  return report;
}

SimilarityMatrix arrange_by_pairs(const SimilarityMatrix& m,
                                  const PairAlignment& alignment) {
  const auto order = [](const std::vector<std::string>& labels,
                        const std::vector<std::string>& first) {
    std::vector<std::size_t> out;
    std::set<std::size_t> taken;
    for (const auto& label : first) {
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it == labels.end()) {
        throw UsageError(fmt::format("label '{}' not in matrix", label));
      }
      const auto idx = static_cast<std::size_t>(it - labels.begin());
      out.push_back(idx);
      taken.insert(idx);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!taken.contains(i)) out.push_back(i);
    }
    return out;
  };
  std::vector<std::string> paired_rows;
  std::vector<std::string> paired_cols;
  for (const auto& [r, c] : alignment.pairs) {
    paired_rows.push_back(r);
    paired_cols.push_back(c);
  }
  const auto rows = order(m.row_labels, paired_rows);
  const auto cols = order(m.col_labels, paired_cols);
  SimilarityMatrix out;
  out.embedder_id = m.embedder_id;
  for (const auto r : rows) out.row_labels.push_back(m.row_labels[r]);
  for (const auto c : cols) out.col_labels.push_back(m.col_labels[c]);
  out.values.assign(rows.size(), std::vector<double>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.values[i][j] = m.values[rows[i]][cols[j]];
    }
  }
  return out;
}

LabeledTextSet code_name_set(const Codebook& cb, std::string id) {
  std::map<std::string, std::size_t> seen;
  for (const auto& code : cb.codes) ++seen[code.name];
  LabeledTextSet set;
  set.id = std::move(id);
  for (const auto& code : cb.codes) {
    std::string label = code.name;
    if (seen[code.name] > 1) label = fmt::format("{} [{}]", code.name, code.index);
    set.items.push_back({std::move(label), code.name});
  }
  return set;
}

CodebookComparison compare_codebooks(
    const Codebook& a, const Codebook& b, EmbeddingProvider& embedder,
    const std::optional<std::filesystem::path>& manual_pairs, double threshold) {
  const auto rows = code_name_set(a, "a");
  const auto cols = code_name_set(b, "b");
  const auto full = similarity_matrix(rows, cols, embedder);

  CodebookComparison out;
  if (manual_pairs) {
    auto manual = load_manual_pairs(*manual_pairs, full.row_labels, full.col_labels);
    out.alignment = std::move(manual.alignment);
  } else {
    out.alignment = align_greedy(full);
  }
  out.matrix = arrange_by_pairs(full, out.alignment);
  std::set<std::string> paired_rows;
  std::set<std::string> paired_cols;
  for (const auto& [r, c] : out.alignment.pairs) {
    paired_rows.insert(r);
    paired_cols.insert(c);
  }
  for (const auto& label : out.matrix.row_labels) {
    if (!paired_rows.contains(label)) out.unmatched_rows.push_back(label);
  }
  for (const auto& label : out.matrix.col_labels) {
    if (!paired_cols.contains(label)) out.unmatched_cols.push_back(label);
  }
  if (!out.alignment.pairs.empty()) {
    out.diagonal = diagonal_report(out.matrix, out.alignment, threshold);
  }
  return out;
}

std::string HumanScoreSummary::text() const {
  return fmt::format("{} at maximum, min {}", at_maximum, text::format_real(min));
}

HumanScoreIngest ingest_human_scores(const std::filesystem::path& file,
                                     const PairAlignment& alignment,
                                     std::string rater_id) {
  const auto rows = csv::read_file(file);
  std::map<std::pair<std::string, std::string>, double> given;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (r == 0 && is_header(row, {"row_label", "col_label", "score"})) continue;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 3) {
      throw UsageError(fmt::format("{}: line {}: expected row_label,col_label,score",
                                   file.string(), r + 1));
    }
    double score = 0.0;
    try {
      std::size_t used = 0;
      const std::string cell(text::trim(row[2]));
      score = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("{}: line {}: bad score '{}'", file.string(),
                                   r + 1, row[2]));
    }
    if (!(score >= 0.0 && score <= 10.0)) {
      throw UsageError(fmt::format("{}: line {}: score {} outside [0, 10]",
                                   file.string(), r + 1, row[2]));
    }
    // Resolve against the alignment so numbering prefixes are tolerated.
    std::vector<std::string> rows_in;
    std::vector<std::string> cols_in;
    for (const auto& [a, b] : alignment.pairs) {
      rows_in.push_back(a);
      cols_in.push_back(b);
    }
    const auto ri = find_label(rows_in, std::string(text::trim(row[0])));
    const auto ci = find_label(cols_in, std::string(text::trim(row[1])));
    if (!ri || !ci || *ri != *ci) {
      throw UsageError(fmt::format("{}: line {}: pair ('{}', '{}') is not in the alignment",
                                   file.string(), r + 1, row[0], row[1]));
    }
    given[alignment.pairs[*ri]] = score;
  }

  HumanScoreIngest out;
  out.set.rater_id = std::move(rater_id);
  for (const auto& pair : alignment.pairs) {
    const auto it = given.find(pair);
    if (it == given.end()) continue;
    out.set.scores.push_back({pair.first, pair.second, it->second});
  }

  const std::size_t k = out.set.scores.size();
  out.overlay.embedder_id = "human:" + out.set.rater_id;
  out.overlay.values.assign(k, std::vector<double>(k, 0.0));
  auto& s = out.summary;
  s.count = k;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& score = out.set.scores[i];
    out.overlay.row_labels.push_back(score.row_label);
    out.overlay.col_labels.push_back(score.col_label);
    out.overlay.values[i][i] = score.normalized();
    if (score.score == 10.0) ++s.at_maximum;
    s.min = std::min(s.min, score.score);
    s.max = std::max(s.max, score.score);
    sum += score.score;
  }
  if (k == 0) {
    s.min = s.max = 0.0;
  } else {
    s.mean = sum / static_cast<double>(k);
  }
  return out;
}

}  // namespace thema
