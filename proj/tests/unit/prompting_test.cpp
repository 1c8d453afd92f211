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

#include "thema/prompting.hpp"

#include <gtest/gtest.h>

#include "temp_dir.hpp"
#include "thema/text.hpp"

namespace thema {
namespace {

TEST(Builtins, AllFourValidate) {
  const auto& all = builtin_templates();
  ASSERT_EQ(all.size(), 4u);
  for (const auto& tpl : all) EXPECT_NO_THROW(validate(tpl)) << tpl.id;
  EXPECT_EQ(builtin_template("it-coding").keys.container, "Categorie");
  EXPECT_EQ(builtin_template("it-theming").phase, Phase::kTheming);
  EXPECT_THROW(builtin_template("fr-coding"), UsageError);
}

TEST(Render, ItalianCodingWrapsTextInFence) {
  const auto& tpl = builtin_template("it-coding");
  const auto out = render(tpl, {{"testo", "Intervista n. 1"}});
  EXPECT_NE(out.find("```Intervista n. 1```"), std::string::npos);
  EXPECT_NE(out.find("'Categorie'"), std::string::npos);
  EXPECT_NE(out.find("massimo 25 parole"), std::string::npos);
}

TEST(Render, MinThemesPlumbsThrough) {
  const auto out = render(builtin_template("it-theming"),
                          {{"codes_list", "[0]: a. b. c"}, {"min_themes", "12"}});
  EXPECT_NE(out.find("(almeno 12)"), std::string::npos);
  EXPECT_NE(out.find("[0]: a. b. c."), std::string::npos);
}

TEST(Render, ValuesAreNotReexpanded) {
  PromptTemplate tpl{.id = "t", .phase = Phase::kCoding, .language = "it",
                     .body = "<{testo}>", .keys = {}};
  EXPECT_EQ(render(tpl, {{"testo", "{testo} {x}"}}), "<{testo} {x}>");
}

TEST(Render, MissingBindingThrowsAndUnusedWarns) {
  PromptTemplate tpl{.id = "t", .phase = Phase::kCoding, .language = "it",
                     .body = "{testo} {altro}", .keys = {}};
  try {
    render(tpl, {{"testo", "x"}});
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("{altro}"), std::string::npos);
  }
  Diagnostics diag;
  render(tpl, {{"testo", "x"}, {"altro", "y"}, {"extra", "z"}}, &diag);
  ASSERT_EQ(diag.warnings.size(), 1u);
  EXPECT_NE(diag.warnings[0].find("extra"), std::string::npos);
}

TEST(Render, JsonBracesAreLiteral) {
  PromptTemplate tpl{.id = "t", .phase = Phase::kCoding, .language = "en",
                     .body = "{\"a\": 1} { testo } {testo}", .keys = {}};
  EXPECT_EQ(placeholders(tpl.body), (std::vector<std::string>{"testo"}));
  EXPECT_EQ(render(tpl, {{"testo", "T"}}), "{\"a\": 1} { testo } T");
}

TEST(Validate, PlaceholderRulesPerPhase) {
  PromptTemplate coding = builtin_template("it-coding");
  coding.body = "no placeholder";
  EXPECT_THROW(validate(coding), UsageError);
  coding.body = "{testo} {testo}";
  EXPECT_THROW(validate(coding), UsageError);

  PromptTemplate theming = builtin_template("it-theming");
  theming.body = "{codes_list}";
  EXPECT_THROW(validate(theming), UsageError);
  theming.body = "{codes_list} {min_themes}";
  EXPECT_NO_THROW(validate(theming));
  theming.keys.indices.clear();
  EXPECT_THROW(validate(theming), UsageError);
}

TEST(CodeList, FormatsContiguousIndices) {
  std::vector<InitialCode> codes{
      {.index = 0, .name = "Dati", .description = "Cosa sono", .quote = "un dato",
       .transcript_id = "t", .run_id = ""},
      {.index = 1, .name = "Privacy", .description = "Tutela", .quote = "la privacy",
       .transcript_id = "t", .run_id = ""}};
  EXPECT_EQ(format_code_list(codes),
            "[0]: Dati. Cosa sono. un dato, [1]: Privacy. Tutela. la privacy");
  codes[1].index = 2;
  EXPECT_THROW(format_code_list(codes), UsageError);
  EXPECT_THROW(format_code_list({}), UsageError);
}

TEST(TemplateFile, SerializeParseRoundTrip) {
  for (const auto& tpl : builtin_templates()) {
    const auto back = parse_template(serialize_template(tpl), "other");
    EXPECT_EQ(back, tpl) << tpl.id;
  }
}

TEST(TemplateFile, LoadFromDiskAndResolve) {
  testing::TempDir dir;
  const auto path = dir / "mio.txt";
  text::write_file_atomic(
      path,
      "phase: coding\nlanguage: it\n"
      "keys: Codici=container, titolo=name, spiegazione=description, frase=quote\n"
      "---\nAnalizza: {testo}\n");
  const auto tpl = resolve_template(path.string());
  EXPECT_EQ(tpl.id, "mio");
  EXPECT_EQ(tpl.keys.name, "titolo");
  EXPECT_EQ(tpl.body, "Analizza: {testo}");
  EXPECT_EQ(resolve_template("en-theming").language, "en");
  EXPECT_THROW(resolve_template((dir / "missing.txt").string()), Error);
}

TEST(TemplateFile, RejectsMalformedFrontMatter) {
  EXPECT_THROW(parse_template("language: it\n---\n{testo}", "x"), UsageError);
  EXPECT_THROW(parse_template("phase: coding\nlanguage: it\n{testo}", "x"),
               UsageError);
  EXPECT_THROW(parse_template("phase: coding\nlanguage: it\ncolor: red\n---\n{testo}", "x"),
               UsageError);
  EXPECT_THROW(parse_template("phase: drafting\nlanguage: it\n---\n{testo}", "x"),
               UsageError);
}

}  // namespace
}  // namespace thema
