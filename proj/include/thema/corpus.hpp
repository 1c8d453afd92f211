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

namespace thema {

/// One interview document. `text` is what the coding prompt receives.
struct Transcript {
  std::string id;
  std::string language;
  std::string text;
  std::filesystem::path source_path;
  std::size_t char_count = 0;  // Unicode scalar values in `text`

  bool operator==(const Transcript&) const = default;
};

/// A human reference category used as the evaluation standard.
struct ReferenceCategory {
  std::string id;
  std::string label;
  std::optional<std::string> detail;

  bool operator==(const ReferenceCategory&) const = default;
};

struct CorpusOptions {
  std::string extension = ".txt";
  /// Transcripts longer than this are rejected; split them upstream.
  std::size_t max_chars = 48000;
};

/// Loads every `*.txt` file in `dir` (non-recursive), sorted by id.
/// The id is the filename stem. Fails on the first invalid file; the message
/// names the offending path.
std::vector<Transcript> load_corpus(const std::filesystem::path& dir,
                                    const std::string& language,
                                    const CorpusOptions& options = {});

/// Builds a transcript from an in-memory string, applying the same checks as
/// load_corpus.
Transcript make_transcript(std::string id, std::string language,
                           std::string text,
                           std::filesystem::path source_path = {},
                           std::size_t max_chars = CorpusOptions{}.max_chars);

/// Reads an `id,label,detail` CSV. Row order is preserved; an empty detail
/// cell yields no detail.
std::vector<ReferenceCategory> load_reference_categories(
    const std::filesystem::path& file);

}  // namespace thema
