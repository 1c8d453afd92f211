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

#include "thema/coding.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include <fmt/format.h>

#include "thema/csv.hpp"
#include "thema/response_json.hpp"
#include "thema/text.hpp"

namespace thema {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kContainerAliases = {
    "Categorie", "categorie_iniziali", "codici", "codes", "categories",
    "initial_codes"};
const std::vector<std::string> kNameAliases = {
    "nome", "name", "categoria", "codice", "code", "nome_codice", "category"};
const std::vector<std::string> kDescriptionAliases = {
    "descrizione", "description", "descrizione_codice"};
const std::vector<std::string> kQuoteAliases = {"citazione", "quote",
                                                "citation", "citazioni"};

std::vector<std::string> with_primary(const std::string& primary,
                                      const std::vector<std::string>& aliases) {
  std::vector<std::string> out;
  if (!primary.empty()) out.push_back(primary);
  out.insert(out.end(), aliases.begin(), aliases.end());
  return out;
}

std::string string_field(const json* value) {
  if (value == nullptr) return {};
  if (value->is_string()) return std::string(text::trim(value->get<std::string>()));
  if (value->is_array()) {
    // Some responses give a list of quotes; join them.
    std::vector<std::string> parts;
    for (const auto& item : *value) {
      if (item.is_string()) parts.emplace_back(text::trim(item.get<std::string>()));
    }
    return fmt::format("{}", fmt::join(parts, " "));
  }
  return {};
}

}  // namespace

std::string_view to_string(Normalization n) {
  return n == Normalization::kExact ? "exact" : "casefold_trim";
}

Normalization parse_normalization(std::string_view s) {
  if (s == "exact") return Normalization::kExact;
  if (s == "casefold_trim") return Normalization::kCasefoldTrim;
  throw UsageError(fmt::format("unknown normalization '{}'", s));
}

std::vector<CodeTriple> parse_codebook_json(std::string_view raw,
                                            const OutputKeyMap& keys,
                                            Diagnostics* diag) {
  if (text::is_blank(raw)) {
    throw ResponseParseError("empty response", std::string(raw));
  }
  const auto extracted = extract_json(raw);
  if (!extracted) {
    throw ResponseParseError("no JSON found in response", std::string(raw));
  }
  const json& doc = extracted->value;

  const json* container = nullptr;
  if (doc.is_array()) {
    container = &doc;
  } else {
    container = find_member(doc, with_primary(keys.container, kContainerAliases));
    if (container == nullptr) {
      throw ResponseParseError(
          fmt::format("container key '{}' missing", keys.container),
          std::string(raw));
    }
  }

  const auto name_keys = with_primary(keys.name, kNameAliases);
  const auto desc_keys = with_primary(keys.description, kDescriptionAliases);
  const auto quote_keys = with_primary(keys.quote, kQuoteAliases);

  std::vector<CodeTriple> out;
  std::size_t entries = 0;
  const auto take = [&](const json& entry, std::string fallback_name) {
    ++entries;
    CodeTriple t;
    t.name = string_field(find_member(entry, name_keys));
    if (t.name.empty()) t.name = std::string(text::trim(fallback_name));
    t.description = string_field(find_member(entry, desc_keys));
    t.quote = string_field(find_member(entry, quote_keys));
    if (t.name.empty() || t.description.empty() || t.quote.empty()) {
      if (diag != nullptr) {
        diag->warn(fmt::format(
            "skipped entry {} ('{}'): missing name, description or quote",
            entries - 1, t.name));
      }
      return;
    }
    out.push_back(std::move(t));
  };

  if (container->is_array()) {
    for (const auto& entry : *container) take(entry, {});
  } else if (container->is_object()) {
    for (auto it = container->begin(); it != container->end(); ++it) {
      take(it.value(), it.key());
    }
  } else {
    throw ResponseParseError(
        fmt::format("'{}' is neither a list nor an object", keys.container),
        std::string(raw));
  }
  if (entries > 0 && out.empty()) {
    throw ResponseParseError(
        "no entry has all of name, description and quote", std::string(raw));
  }
  return out;
}

TranscriptCoding code_transcript(const Transcript& transcript,
                                 const PromptTemplate& tpl,
                                 ChatProvider& provider,
                                 const CodingOptions& options) {
  if (tpl.phase != Phase::kCoding) {
    throw UsageError(fmt::format("template {} is not a coding template", tpl.id));
  }
  TranscriptCoding out;
  out.transcript_id = transcript.id;
  const std::string& language = options.expected_language.empty()
                                    ? transcript.language
                                    : options.expected_language;
  if (!language.empty() && language != tpl.language) {
    out.diagnostics.warn(fmt::format(
        "{}: template language '{}' differs from data language '{}'",
        transcript.id, tpl.language, language));
  }

  ChatRequest request;
  request.model = options.model;
  request.prompt = render(tpl, {{std::string(kTextVar), transcript.text}});
  request.temperature = options.temperature;
  request.max_output_tokens = options.max_output_tokens;
  request.seed_tag = fmt::format("{}/{}", options.run_id, transcript.id);

  out.response = provider.chat(request);
  out.raw_response = out.response.text;
  if (out.response.truncated) {
    out.diagnostics.warn(
        fmt::format("{}: response was truncated by the provider",
                    transcript.id));
  }

  auto triples = parse_codebook_json(out.raw_response, tpl.keys,
                                     &out.diagnostics);
  if (triples.empty()) {
    throw ResponseParseError(
        fmt::format("{}: zero codes in response", transcript.id),
        out.raw_response);
  }
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto& t = triples[i];
    if (text::word_count(t.description) > 2 * options.description_word_budget) {
      out.diagnostics.warn(fmt::format(
          "{}: description of '{}' has {} words (budget {})", transcript.id,
          t.name, text::word_count(t.description),
          options.description_word_budget));
    }
    if (text::word_count(t.quote) > 2 * options.quote_word_budget) {
      out.diagnostics.warn(fmt::format(
          "{}: quote of '{}' has {} words (budget {})", transcript.id, t.name,
          text::word_count(t.quote), options.quote_word_budget));
    }
    out.codes.push_back(InitialCode{.index = i,
                                    .name = std::move(t.name),
                                    .description = std::move(t.description),
                                    .quote = std::move(t.quote),
                                    .transcript_id = transcript.id,
                                    .run_id = options.run_id});
  }
  return out;
}

Codebook aggregate_codebook(
    const std::map<std::string, std::vector<InitialCode>>& per_transcript) {
  Codebook cb;
  for (const auto& [id, codes] : per_transcript) {
    cb.per_transcript_counts[id] = codes.size();
    for (const auto& code : codes) {
      InitialCode c = code;
      c.index = cb.codes.size();
      c.transcript_id = id;
      cb.codes.push_back(std::move(c));
    }
  }
  if (cb.codes.empty()) {
    throw UsageError("cannot aggregate a codebook without codes");
  }
  cb.created_at = utc_timestamp();
  return cb;
}

std::map<std::string, std::vector<InitialCode>> split_codebook(
    const Codebook& cb) {
  std::map<std::string, std::vector<InitialCode>> out;
  for (const auto& [id, count] : cb.per_transcript_counts) out[id];
  for (const auto& code : cb.codes) {
    auto& bucket = out[code.transcript_id];
    InitialCode c = code;
    c.index = bucket.size();
    bucket.push_back(std::move(c));
  }
  return out;
}

SaturationReport saturation(const Codebook& cb, Normalization normalization) {
  if (cb.codes.empty()) throw UsageError("saturation of an empty codebook");
  std::set<std::string> unique;
  for (const auto& code : cb.codes) {
    unique.insert(normalization == Normalization::kExact
                      ? code.name
                      : text::casefold(text::trim(code.name)));
  }
  SaturationReport r;
  r.total_codes = cb.codes.size();
  r.unique_codes = unique.size();
  r.ratio_total_to_unique = static_cast<double>(r.total_codes) /
                            static_cast<double>(r.unique_codes);
  r.normalization =
      normalization == Normalization::kExact
          ? "exact: names compared byte for byte"
          : "casefold_trim: names trimmed and lowercased before comparison";
  return r;
}

double quote_audit(const Codebook& cb, const std::vector<Transcript>& corpus) {
  if (cb.codes.empty()) return 0.0;
  std::map<std::string, const Transcript*> by_id;
  for (const auto& t : corpus) by_id[t.id] = &t;
  std::size_t verbatim = 0;
  for (const auto& code : cb.codes) {
    const auto it = by_id.find(code.transcript_id);
    if (it == by_id.end()) continue;
    const auto quote = text::trim(code.quote);
    if (!quote.empty() && it->second->text.find(quote) != std::string::npos) {
      ++verbatim;
    }
  }
  return static_cast<double>(verbatim) / static_cast<double>(cb.codes.size());
}

std::string codebook_to_csv_string(const Codebook& cb) {
  std::string out = std::string(kCodebookHeader) + "\r\n";
  for (const auto& c : cb.codes) {
    out += csv::format_row({std::to_string(c.index), c.transcript_id, c.name,
                            c.description, c.quote, c.run_id});
  }
  return out;
}

void codebook_to_csv(const Codebook& cb, const std::filesystem::path& path) {
  text::write_file_atomic(path, codebook_to_csv_string(cb));
}

Codebook codebook_from_csv_string(std::string_view data,
                                  std::string_view source) {
  const auto rows = csv::parse(data);
  if (rows.empty() ||
      fmt::format("{}", fmt::join(rows.front(), ",")) != kCodebookHeader) {
    throw ParseError(fmt::format("{}: schema mismatch, expected header {}",
                                 source, kCodebookHeader));
  }
  Codebook cb;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 6) {
      throw ParseError(fmt::format("{}: schema mismatch on record {}", source, r));
    }
    std::size_t index = 0;
    try {
      std::size_t used = 0;
      index = std::stoul(row[0], &used);
      if (used != row[0].size()) throw std::invalid_argument(row[0]);
    } catch (const std::exception&) {
      throw ParseError(
          fmt::format("{}: bad index '{}' on record {}", source, row[0], r));
    }
    if (index != cb.codes.size()) {
      throw ParseError(fmt::format("{}: index gap: expected {}, found {}",
                                   source, cb.codes.size(), index));
    }
    cb.codes.push_back(InitialCode{.index = index,
                                   .name = row[2],
                                   .description = row[3],
                                   .quote = row[4],
                                   .transcript_id = row[1],
                                   .run_id = row[5]});
    ++cb.per_transcript_counts[row[1]];
  }
  return cb;
}

Codebook codebook_from_csv(const std::filesystem::path& path) {
  const std::string data = text::read_file(path);
  if (!text::is_valid_utf8(data)) {
    throw ParseError(fmt::format("{}: not valid UTF-8", path.string()));
  }
  return codebook_from_csv_string(data, path.string());
}

CorpusCoding code_corpus(const std::vector<Transcript>& corpus,
                         const PromptTemplate& tpl, ChatProvider& provider,
                         const CodingOptions& options) {
  struct Slot {
    std::optional<TranscriptCoding> result;
    std::optional<CodingFailure> failure;
  };
  std::vector<Slot> slots(corpus.size());
  parallel_for(corpus.size(), options.max_parallel, [&](std::size_t i) {
    const auto& t = corpus[i];
    try {
      slots[i].result = code_transcript(t, tpl, provider, options);
    } catch (const ResponseParseError& e) {
      slots[i].failure = CodingFailure{t.id, e.what(), e.raw(), e.code()};
    } catch (const Error& e) {
      slots[i].failure = CodingFailure{t.id, e.what(), {}, e.code()};
    } catch (const std::exception& e) {
      slots[i].failure = CodingFailure{t.id, e.what(), {}, ExitCode::kProvider};
    }
  });

  CorpusCoding out;
  std::map<std::string, std::vector<InitialCode>> grouped;
  for (auto& slot : slots) {
    if (slot.result) {
      out.diagnostics.merge(slot.result->diagnostics);
      grouped[slot.result->transcript_id] = slot.result->codes;
      out.results.push_back(std::move(*slot.result));
    } else if (slot.failure) {
      out.failures.push_back(std::move(*slot.failure));
    }
  }
  const auto by_id = [](const auto& a, const auto& b) {
    return a.transcript_id < b.transcript_id;
  };
  std::sort(out.results.begin(), out.results.end(), by_id);
  std::sort(out.failures.begin(), out.failures.end(), by_id);
  if (!grouped.empty()) {
    out.codebook = aggregate_codebook(grouped);
    out.codebook.prompt_fingerprint = text::sha256_hex(tpl.body);
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900,
                     tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min,
                     tm.tm_sec);
}

}  // namespace thema
