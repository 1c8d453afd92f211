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
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "parser_cases.hpp"
#include "temp_dir.hpp"
#include "thema/response_json.hpp"
#include "thema/text.hpp"

namespace thema {
namespace {

using fixtures::kCodingTableJson;
using fixtures::parser_cases;

const OutputKeyMap& it_keys() { return builtin_template("it-coding").keys; }

TEST(CategorieParser, TwelveCaseSuite) {
  const auto cases = parser_cases();
  ASSERT_EQ(cases.size(), 12u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c.label);
    Diagnostics diag;
    if (c.expected < 0) {
      EXPECT_THROW(parse_codebook_json(c.raw, it_keys(), &diag), ResponseParseError);
      continue;
    }
    const auto triples = parse_codebook_json(c.raw, it_keys(), &diag);
    ASSERT_EQ(triples.size(), static_cast<std::size_t>(c.expected));
    for (const auto& t : triples) {
      EXPECT_FALSE(t.name.empty());
      EXPECT_FALSE(t.description.empty());
      EXPECT_FALSE(t.quote.empty());
    }
  }
}

TEST(CategorieParser, CodingTableEntriesSurviveVerbatim) {
  const auto triples = parse_codebook_json(kCodingTableJson, it_keys());
  ASSERT_EQ(triples.size(), 5u);
  EXPECT_EQ(triples[0].name, "Edizioni digitali");
  EXPECT_EQ(triples[2].description,
            "I testi dell'edizione critica possono essere considerati dati.");
  EXPECT_EQ(triples[3].quote,
            "Ci sono aspetti di privacy sicuramente nei dati: raccogliendo dati "
            "sulle persone c'è questo aspetto, c'è un task dedicato a questo nel "
            "progetto.");
}

TEST(CategorieParser, WarnsOnSkippedEntryAndRejectsAllIncomplete) {
  Diagnostics diag;
  parse_codebook_json(parser_cases()[8].raw, it_keys(), &diag);
  ASSERT_EQ(diag.warnings.size(), 1u);
  EXPECT_NE(diag.warnings[0].find("'a'"), std::string::npos);
  EXPECT_THROW(parse_codebook_json(R"({"Categorie": [{"nome": "a"}]})", it_keys()),
               ResponseParseError);
  EXPECT_THROW(parse_codebook_json(R"({"Altro": []})", it_keys()), ResponseParseError);
  EXPECT_THROW(parse_codebook_json("   ", it_keys()), ResponseParseError);
}

TEST(CategorieParser, RejectionKeepsRawText) {
  try {
    parse_codebook_json("niente", it_keys());
    FAIL();
  } catch (const ResponseParseError& e) {
    EXPECT_EQ(e.raw(), "niente");
    EXPECT_EQ(e.code(), ExitCode::kParse);
  }
}

TEST(ExtractJson, RecoveryLadder) {
  EXPECT_EQ(extract_json(R"({"a":1})")->recovery, JsonRecovery::kAsIs);
  EXPECT_EQ(extract_json("x\n```json\n[1]\n```")->recovery, JsonRecovery::kFenced);
  const auto mid = extract_json(R"(see {"s": "a } b"} end)");
  ASSERT_TRUE(mid);
  EXPECT_EQ(mid->recovery, JsonRecovery::kBalancedRegion);
  EXPECT_EQ(mid->value["s"], "a } b");
  EXPECT_FALSE(extract_json("{ nope"));
}

TEST(ExtractJson, FindMemberIsCaseInsensitive) {
  const auto doc = nlohmann::json::parse(R"({"Nome": 1, "name": 2})");
  EXPECT_EQ(*find_member(doc, {"nome"}), 1);
  EXPECT_EQ(*find_member(doc, {"", "missing", "NAME"}), 2);
  EXPECT_EQ(find_member(doc, {"x"}), nullptr);
}

// ---------------------------------------------------------------------------

Codebook book_of(const std::vector<std::string>& names) {
  std::map<std::string, std::vector<InitialCode>> per;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto& bucket = per[i % 2 == 0 ? "t1" : "t2"];
    bucket.push_back({.index = bucket.size(), .name = names[i], .description = "d",
                      .quote = "q", .transcript_id = "", .run_id = "r"});
  }
  return aggregate_codebook(per);
}

TEST(Saturation, DistinctDuplicateAndWorkedExample) {
  EXPECT_DOUBLE_EQ(saturation(book_of({"A", "B", "C"})).ratio_total_to_unique, 1.0);
  EXPECT_GT(saturation(book_of({"A", "B", "C", "A"})).ratio_total_to_unique,
            saturation(book_of({"A", "B", "C"})).ratio_total_to_unique);
  const auto r = saturation(book_of({"A", "A", "B", "B", "B"}));
  EXPECT_EQ(r.total_codes, 5u);
  EXPECT_EQ(r.unique_codes, 2u);
  EXPECT_DOUBLE_EQ(r.ratio_total_to_unique, 2.5);
  EXPECT_THROW(saturation(Codebook{}), UsageError);
}

TEST(Saturation, NormalizationModes) {
  const auto cb = book_of({"Privacy", " privacy ", "PRIVACY", "Dati"});
  EXPECT_EQ(saturation(cb, Normalization::kExact).unique_codes, 4u);
  EXPECT_EQ(saturation(cb, Normalization::kCasefoldTrim).unique_codes, 2u);
  EXPECT_EQ(parse_normalization(to_string(Normalization::kExact)), Normalization::kExact);
  EXPECT_THROW(parse_normalization("fuzzy"), UsageError);
}

TEST(Saturation, MatchesSetCountOracleOnRandomCodebooks) {
  std::mt19937 rng(2024);
  const std::vector<std::string> stems{"dati", "Dati", "privacy", " metodi", "metodi ",
                                       "ARCHIVIO", "archivio", "fonti"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> names(1 + rng() % 40);
    for (auto& n : names) n = stems[rng() % stems.size()];
    const auto cb = book_of(names);

    // Oracle: quadratic first-occurrence count.
    const auto count_unique = [&](auto key) {
      std::size_t unique = 0;
      for (std::size_t i = 0; i < names.size(); ++i) {
        bool seen = false;
        for (std::size_t j = 0; j < i && !seen; ++j) seen = key(names[j]) == key(names[i]);
        unique += seen ? 0 : 1;
      }
      return unique;
    };
    const auto exact = [](const std::string& s) { return s; };
    const auto folded = [](const std::string& s) {
      std::string t(text::trim(s));
      std::transform(t.begin(), t.end(), t.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return t;
    };
    for (const auto& [mode, key_unique] :
         {std::pair{Normalization::kExact, count_unique(exact)},
          std::pair{Normalization::kCasefoldTrim, count_unique(folded)}}) {
      const auto r = saturation(cb, mode);
      EXPECT_EQ(r.total_codes, names.size());
      EXPECT_EQ(r.unique_codes, key_unique);
      EXPECT_DOUBLE_EQ(r.ratio_total_to_unique,
                       static_cast<double>(names.size()) / static_cast<double>(key_unique));
    }
  }
}

// ---------------------------------------------------------------------------

TEST(Codebook, AggregateAssignsGlobalIndicesByTranscriptId) {
  std::map<std::string, std::vector<InitialCode>> per;
  per["t2"] = {{.index = 0, .name = "c", .description = "d", .quote = "q",
                .transcript_id = "", .run_id = ""}};
  per["t1"] = {{.index = 0, .name = "a", .description = "d", .quote = "q",
                .transcript_id = "", .run_id = ""},
               {.index = 1, .name = "b", .description = "d", .quote = "q",
                .transcript_id = "", .run_id = ""}};
  const auto cb = aggregate_codebook(per);
  ASSERT_EQ(cb.codes.size(), 3u);
  EXPECT_EQ(cb.codes[0].name, "a");
  EXPECT_EQ(cb.codes[2].transcript_id, "t2");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(cb.codes[i].index, i);
  EXPECT_EQ(cb.per_transcript_counts.at("t1"), 2u);
  const auto back = split_codebook(cb);
  EXPECT_EQ(back.at("t1")[1].name, "b");
  EXPECT_EQ(back.at("t2")[0].index, 0u);
  EXPECT_THROW(aggregate_codebook({}), UsageError);
}

TEST(Codebook, CsvRoundTripWithAwkwardText) {
  auto cb = book_of({"Nome, con virgola", "Citazione \"tra virgolette\"", "a\r\nriga"});
  cb.codes[1].quote = "Disse: \"sì, certo\"\nE poi tacque.";
  const auto text = codebook_to_csv_string(cb);
  EXPECT_EQ(text.rfind(std::string(kCodebookHeader) + "\r\n", 0), 0u);
  EXPECT_EQ(codebook_from_csv_string(text), cb);

  testing::TempDir dir;
  codebook_to_csv(cb, dir / "codebook.csv");
  EXPECT_EQ(codebook_from_csv(dir / "codebook.csv"), cb);
}

TEST(Codebook, CsvSchemaErrors) {
  const std::string header = std::string(kCodebookHeader) + "\r\n";
  EXPECT_THROW(codebook_from_csv_string("index,name\r\n0,a\r\n"), ParseError);
  EXPECT_THROW(codebook_from_csv_string(header + "0,t,a,d,q,r\r\n2,t,b,d,q,r\r\n"),
               ParseError);
  EXPECT_THROW(codebook_from_csv_string(header + "x,t,a,d,q,r\r\n"), ParseError);
  EXPECT_THROW(codebook_from_csv_string(header + "0,t,a,d,q\r\n"), ParseError);
  try {
    codebook_from_csv_string(header + "1,t,a,d,q,r\r\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("index gap"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------

Transcript transcript(const std::string& id, const std::string& body) {
  return make_transcript(id, "it", "Intervista " + id + "\n" + body);
}

std::string one_code_response(const std::string& name) {
  return R"({"Categorie": [{"nome": ")" + name +
         R"(", "descrizione": "descrizione breve", "citazione": "una citazione"}]})";
}

TEST(CodeTranscript, ProducesIndexedCodesAndRecordsRequest) {
  auto mock = mock_chat_provider({{"Intervista a", std::nullopt, kCodingTableJson}});
  CodingOptions opts{.model = "gpt-3.5-turbo", .temperature = 0.0,
                     .max_output_tokens = 4096, .run_id = "run-1",
                     .expected_language = "", .max_parallel = 1,
                     .description_word_budget = 25, .quote_word_budget = 100};
  const auto out =
      code_transcript(transcript("a", "testo"), builtin_template("it-coding"), *mock, opts);
  ASSERT_EQ(out.codes.size(), 5u);
  EXPECT_EQ(out.codes[4].index, 4u);
  EXPECT_EQ(out.codes[4].transcript_id, "a");
  EXPECT_EQ(out.codes[0].run_id, "run-1");
  EXPECT_TRUE(out.diagnostics.empty());
  const auto call = mock->calls().at(0);
  EXPECT_EQ(call.model, "gpt-3.5-turbo");
  EXPECT_EQ(call.seed_tag, "run-1/a");
  EXPECT_NE(call.prompt.find("```Intervista a\ntesto```"), std::string::npos);
}

TEST(CodeTranscript, WarningsForLanguageAndBudgets) {
  std::string long_desc;
  for (int i = 0; i < 60; ++i) long_desc += "parola ";
  auto mock = mock_chat_provider(
      {{"Intervista", std::nullopt,
        R"({"Codes": [{"name": "n", "description": ")" + long_desc +
            R"(", "quote": "q"}]})"}});
  CodingOptions opts;
  const auto out =
      code_transcript(transcript("a", "x"), builtin_template("en-coding"), *mock, opts);
  ASSERT_EQ(out.diagnostics.warnings.size(), 2u);
  EXPECT_NE(out.diagnostics.warnings[0].find("differs"), std::string::npos);
  EXPECT_NE(out.diagnostics.warnings[1].find("60 words"), std::string::npos);
}

TEST(CodeTranscript, ZeroCodesAndWrongPhaseFail) {
  auto mock = mock_chat_provider({{"Intervista", std::nullopt, R"({"Categorie": []})"}});
  CodingOptions opts;
  EXPECT_THROW(code_transcript(transcript("a", "x"), builtin_template("it-coding"), *mock, opts),
               ResponseParseError);
  EXPECT_THROW(code_transcript(transcript("a", "x"), builtin_template("it-theming"), *mock, opts),
               UsageError);
}

TEST(CodeCorpus, PartialFailureKeepsOtherTranscripts) {
  auto mock = mock_chat_provider({{"Intervista t1", std::nullopt, one_code_response("uno")},
                                  {"Intervista t3", std::nullopt, "nessun json"},
                                  {"Intervista t4", std::nullopt, one_code_response("quattro")}});
  const std::vector<Transcript> corpus{transcript("t1", "a"), transcript("t2", "b"),
                                       transcript("t3", "c"), transcript("t4", "d")};
  CodingOptions opts;
  opts.max_parallel = 3;
  const auto out = code_corpus(corpus, builtin_template("it-coding"), *mock, opts);
  ASSERT_EQ(out.codebook.codes.size(), 2u);
  EXPECT_EQ(out.codebook.codes[1].name, "quattro");
  ASSERT_EQ(out.failures.size(), 2u);
  EXPECT_EQ(out.failures[0].transcript_id, "t2");
  EXPECT_EQ(out.failures[0].code, ExitCode::kProvider);
  EXPECT_EQ(out.failures[1].code, ExitCode::kParse);
  EXPECT_EQ(out.failures[1].raw_response, "nessun json");
  EXPECT_EQ(out.codebook.prompt_fingerprint,
            text::sha256_hex(builtin_template("it-coding").body));
}

TEST(CodeCorpus, ResultIndependentOfParallelism) {
  std::vector<Fixture> fixtures;
  std::vector<Transcript> corpus;
  for (int i = 0; i < 12; ++i) {
    const auto id = "t" + std::to_string(10 + i);
    corpus.push_back(transcript(id, "x"));
    fixtures.push_back({"Intervista " + id + "\n", std::nullopt, one_code_response("c" + id)});
  }
  const auto run = [&](std::size_t parallel) {
    auto mock = mock_chat_provider(fixtures);
    CodingOptions opts;
    opts.max_parallel = parallel;
    return codebook_to_csv_string(
        code_corpus(corpus, builtin_template("it-coding"), *mock, opts).codebook);
  };
  const auto serial = run(1);
  for (const std::size_t p : {2u, 4u, 8u}) EXPECT_EQ(run(p), serial);
}

TEST(QuoteAudit, CountsVerbatimQuotes) {
  auto cb = book_of({"a", "b"});
  cb.codes[0].quote = "presente";
  cb.codes[1].quote = "assente";
  const std::vector<Transcript> corpus{make_transcript("t1", "it", "qui è presente"),
                                       make_transcript("t2", "it", "altro")};
  EXPECT_DOUBLE_EQ(quote_audit(cb, corpus), 0.5);
}

}  // namespace
}  // namespace thema
