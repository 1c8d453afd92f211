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

#include "thema/corpus.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "thema/csv.hpp"
#include "thema/error.hpp"
#include "thema/text.hpp"

namespace thema {

namespace fs = std::filesystem;

Transcript make_transcript(std::string id, std::string language,
                           std::string text, fs::path source_path,
                           std::size_t max_chars) {
  const std::string where =
      source_path.empty() ? id : source_path.string();
  if (id.empty()) throw UsageError("transcript id must not be empty");
  if (!text::is_valid_utf8(text)) {
    throw UsageError(fmt::format("{}: not valid UTF-8", where));
  }
  if (text::is_blank(text)) {
    throw UsageError(fmt::format("{}: empty transcript", where));
  }
  const std::size_t chars = text::scalar_count(text);
  if (chars > max_chars) {
    throw UsageError(fmt::format(
        "{}: {} characters exceeds the {} character budget; split the "
        "interview into smaller files",
        where, chars, max_chars));
  }
  return Transcript{.id = std::move(id),
                    .language = std::move(language),
                    .text = std::move(text),
                    .source_path = std::move(source_path),
                    .char_count = chars};
}

std::vector<Transcript> load_corpus(const fs::path& dir,
                                    const std::string& language,
                                    const CorpusOptions& options) {
  if (!fs::is_directory(dir)) {
    throw IoError(fmt::format("corpus directory not found: {}", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() &&
        entry.path().extension() == options.extension) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw IoError(fmt::format("no {} files in {}", options.extension,
                              dir.string()));
  }
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return a.stem().string() < b.stem().string();
  });

  std::vector<Transcript> out;
  out.reserve(files.size());
  for (const auto& file : files) {
    out.push_back(make_transcript(file.stem().string(), language,
                                  text::read_file(file), file,
                                  options.max_chars));
  }
  return out;
}

std::vector<ReferenceCategory> load_reference_categories(const fs::path& file) {
  const auto rows = csv::read_file(file);
  if (rows.empty()) {
    throw ParseError(fmt::format("{}: missing header", file.string()));
  }
  const csv::Row expected{"id", "label", "detail"};
  if (rows.front() != expected) {
    throw ParseError(fmt::format("{}: header must be id,label,detail",
                                 file.string()));
  }
  std::vector<ReferenceCategory> out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (row.size() < 2 || row.size() > 3) {
      throw ParseError(fmt::format("{}: line {}: expected 3 columns",
                                   file.string(), r + 1));
    }
    ReferenceCategory cat;
    cat.id = std::string(text::trim(row[0]));
    cat.label = std::string(text::trim(row[1]));
    if (row.size() == 3 && !text::is_blank(row[2])) {
      cat.detail = std::string(text::trim(row[2]));
    }
    if (cat.id.empty()) {
      throw ParseError(fmt::format("{}: line {}: missing id", file.string(),
                                   r + 1));
    }
    if (cat.label.empty()) {
      throw ParseError(fmt::format("{}: line {}: missing label for '{}'",
                                   file.string(), r + 1, cat.id));
    }
    if (!seen.insert(cat.id).second) {
      throw ParseError(fmt::format("{}: duplicate id '{}'", file.string(),
                                   cat.id));
    }
    out.push_back(std::move(cat));
  }
  return out;
}

}  // namespace thema
