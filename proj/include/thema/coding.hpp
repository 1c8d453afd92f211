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
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "thema/corpus.hpp"
#include "thema/error.hpp"
#include "thema/initial_code.hpp"
#include "thema/llm.hpp"
#include "thema/prompting.hpp"

namespace thema {

/// (name, description, quote) as parsed from a coding response.
struct CodeTriple {
  std::string name;
  std::string description;
  std::string quote;

  bool operator==(const CodeTriple&) const = default;
};

/// The aggregated corpus codebook. Equality compares codes and counts; the
/// provenance fields are not stored in the CSV.
struct Codebook {
  std::vector<InitialCode> codes;
  std::map<std::string, std::size_t> per_transcript_counts;
  std::string created_at;          // ISO-8601 UTC
  std::string prompt_fingerprint;  // SHA-256 of the template body

  bool operator==(const Codebook& other) const {
    return codes == other.codes &&
           per_transcript_counts == other.per_transcript_counts;
  }
};

enum class Normalization { kExact, kCasefoldTrim };

std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view s);

struct SaturationReport {
  std::size_t total_codes = 0;
  std::size_t unique_codes = 0;
  double ratio_total_to_unique = 0.0;
  std::string normalization;
};

/// Thrown when a response cannot be turned into codes. Keeps the raw text
/// for the audit archive.
class ResponseParseError : public ParseError {
 public:
  ResponseParseError(const std::string& what, std::string raw)
      : ParseError(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Extracts code triples from a coding response, tolerating code fences and
/// prose around the JSON. The container may be an array of entries or an
/// object keyed by code name. Keys match case-insensitively, falling back to
/// common Italian/English aliases. Entries lacking a field are skipped with a
/// warning unless none remain valid.
std::vector<CodeTriple> parse_codebook_json(std::string_view raw,
                                            const OutputKeyMap& keys,
                                            Diagnostics* diag = nullptr);

struct CodingOptions {
  std::string model;
  double temperature = 0.0;
  int max_output_tokens = 4096;
  std::string run_id;
  std::string expected_language;  // mismatch with the template only warns
  std::size_t max_parallel = 4;
  std::size_t description_word_budget = 25;
  std::size_t quote_word_budget = 100;
};

struct TranscriptCoding {
  std::string transcript_id;
  std::vector<InitialCode> codes;  // indices 0..n-1 within the transcript
  std::string raw_response;
  ChatResponse response;
  Diagnostics diagnostics;
};

/// Phase 2 for one transcript. Throws ProviderError on chat failure and
/// ResponseParseError when no codes can be parsed (including zero codes).
TranscriptCoding code_transcript(const Transcript& transcript,
                                 const PromptTemplate& tpl,
                                 ChatProvider& provider,
                                 const CodingOptions& options);

/// Groups codes by transcript id and assigns global indices by ascending
/// transcript id, then within-transcript order.
Codebook aggregate_codebook(
    const std::map<std::string, std::vector<InitialCode>>& per_transcript);

/// Inverse of aggregate_codebook, keyed by transcript id.
std::map<std::string, std::vector<InitialCode>> split_codebook(
    const Codebook& cb);

SaturationReport saturation(const Codebook& cb,
                            Normalization normalization = Normalization::kCasefoldTrim);

/// Fraction of codes whose trimmed quote occurs verbatim in its transcript.
/// Informational only.
double quote_audit(const Codebook& cb, const std::vector<Transcript>& corpus);

inline constexpr std::string_view kCodebookHeader =
    "index,transcript_id,name,description,quote,run_id";

std::string codebook_to_csv_string(const Codebook& cb);
void codebook_to_csv(const Codebook& cb, const std::filesystem::path& path);
Codebook codebook_from_csv(const std::filesystem::path& path);
Codebook codebook_from_csv_string(std::string_view data,
                                  std::string_view source = "codebook");

struct CodingFailure {
  std::string transcript_id;
  std::string message;
  std::string raw_response;  // empty when the provider never answered
  ExitCode code = ExitCode::kProvider;
};

struct CorpusCoding {
  Codebook codebook;  // empty when every transcript failed
  std::vector<TranscriptCoding> results;  // successes, by transcript id
  std::vector<CodingFailure> failures;    // by transcript id
  Diagnostics diagnostics;
};

/// Codes every transcript with at most options.max_parallel requests in
/// flight. The merge is keyed by transcript id, so the result does not
/// depend on completion order.
CorpusCoding code_corpus(const std::vector<Transcript>& corpus,
                         const PromptTemplate& tpl, ChatProvider& provider,
                         const CodingOptions& options);

std::string utc_timestamp();

}  // namespace thema
