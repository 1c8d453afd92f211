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

#include "thema/theming.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "temp_dir.hpp"

namespace thema {
namespace {

Codebook codebook(std::size_t n) {
  std::map<std::string, std::vector<InitialCode>> per;
  for (std::size_t i = 0; i < n; ++i) {
    per["t"].push_back({.index = i, .name = "codice " + std::to_string(i),
                        .description = "d", .quote = "q", .transcript_id = "t",
                        .run_id = "r"});
  }
  return aggregate_codebook(per);
}

TEST(ThemeName, StripsNumberingAndEmphasis) {
  EXPECT_EQ(clean_theme_name("Tema 1: Metodologie e Standard di Ricerca"),
            "Metodologie e Standard di Ricerca");
  EXPECT_EQ(clean_theme_name("**Theme 12. Open Science**"), "Open Science");
  EXPECT_EQ(clean_theme_name("\"Privacy\""), "Privacy");
  EXPECT_EQ(clean_theme_name("Tematiche aperte"), "Tematiche aperte");
}

TEST(ThemeParser, LineFormatThemeList) {
  const std::string raw =
      "Ecco i temi:\n\n"
      "**Tema 1: Metodologie e Standard di Ricerca**\n"
      "Questo tema esplora le diverse metodologie.\n"
      "Include l'approccio multidisciplinare.\n"
      "Categorie: 0, 3, 5-7\n\n"
      "### Tema 2 - Conservazione e Accesso ai Materiali\n"
      "Descrizione: Conservazione dei materiali.\n"
      "Codici: [1] [2]\n"
      "Queste categorie sono centrali.\n\n"
      "Tema 3:\n"
      "Proprietà Intellettuale e Privacy\n"
      "Tutela dei dati.\n"
      "Categorie: 4\n";
  const auto themes = parse_theme_response(raw);
  ASSERT_EQ(themes.size(), 3u);
  EXPECT_EQ(themes[0].name, "Metodologie e Standard di Ricerca");
  EXPECT_EQ(themes[0].description,
            "Questo tema esplora le diverse metodologie. Include l'approccio multidisciplinare.");
  EXPECT_EQ(themes[0].code_indices, (std::vector<std::size_t>{0, 3, 5, 6, 7}));
  EXPECT_EQ(themes[1].name, "Conservazione e Accesso ai Materiali");
  EXPECT_EQ(themes[1].description, "Conservazione dei materiali.");
  EXPECT_EQ(themes[1].code_indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(themes[2].name, "Proprietà Intellettuale e Privacy");
  EXPECT_EQ(themes[2].code_indices, (std::vector<std::size_t>{4}));
}

TEST(ThemeParser, JsonWithTemplateKeysAndAliases) {
  const auto& keys = builtin_template("it-theming").keys;
  const auto themes = parse_theme_response(
      "```json\n{\"Temi\": [{\"nome\": \"Tema 1: Dati\", \"descrizione\": \"x\","
      " \"categorie\": [0, \"2-3\", 4.0]},"
      " {\"name\": \"Open\", \"codes\": \"1, 5\"}]}\n```",
      &keys);
  ASSERT_EQ(themes.size(), 2u);
  EXPECT_EQ(themes[0].name, "Dati");
  EXPECT_EQ(themes[0].code_indices, (std::vector<std::size_t>{0, 2, 3, 4}));
  EXPECT_EQ(themes[1].code_indices, (std::vector<std::size_t>{1, 5}));
}

TEST(ThemeParser, RejectsResponsesWithoutThemes) {
  EXPECT_THROW(parse_theme_response("Non ci sono temi."), ResponseParseError);
  EXPECT_THROW(parse_theme_response(""), ResponseParseError);
  Diagnostics diag;
  const auto themes =
      parse_theme_response(R"({"Temi": [{"nome": "A", "categorie": [-1, 2]}]})", nullptr, &diag);
  EXPECT_EQ(themes[0].code_indices, (std::vector<std::size_t>{2}));
  EXPECT_EQ(diag.warnings.size(), 1u);
}

ThemingOptions opts(double t = 0.0, std::size_t min = 2) {
  ThemingOptions o;
  o.model = "gpt-4-turbo";
  o.temperature = t;
  o.min_themes = min;
  o.run_id = "run";
  return o;
}

TEST(GenerateThemes, DropsBadIndicesAndEmptyThemes) {
  auto mock = mock_chat_provider({{"almeno 3", std::nullopt,
                                   R"({"Temi": [
      {"nome": "A", "descrizione": "a", "categorie": [0, 1, 1, 9]},
      {"nome": "B", "descrizione": "b", "categorie": [7]},
      {"nome": "C", "descrizione": "c", "categorie": [2]}]})"}});
  const auto run = generate_themes(codebook(3), builtin_template("it-theming"), *mock, opts(0, 3));
  ASSERT_EQ(run.set.themes.size(), 2u);
  EXPECT_EQ(run.set.themes[0].code_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(run.set.themes[1].name, "C");
  const auto& w = run.set.warnings;
  const auto has = [&](const char* s) {
    return std::any_of(w.begin(), w.end(),
                       [&](const std::string& x) { return x.find(s) != std::string::npos; });
  };
  EXPECT_TRUE(has("duplicate index 1"));
  EXPECT_TRUE(has("index 9 out of range"));
  EXPECT_TRUE(has("'B' dropped"));
  EXPECT_TRUE(has("below minimum: 2 themes, 3 requested"));
  EXPECT_NE(run.prompt.find("[2]: codice 2. d. q."), std::string::npos);
  EXPECT_EQ(mock->calls()[0].model, "gpt-4-turbo");
}

TEST(GenerateThemes, AllIndicesInvalidIsParseError) {
  auto mock = mock_chat_provider(
      {{"Temi", std::nullopt, R"({"Temi": [{"nome": "A", "categorie": [5]}]})"}});
  EXPECT_THROW(generate_themes(codebook(2), builtin_template("it-theming"), *mock, opts()),
               ResponseParseError);
  EXPECT_THROW(generate_themes(codebook(2), builtin_template("it-coding"), *mock, opts()),
               UsageError);
}

TEST(Sweep, OneOutcomePerTemperatureAndFailuresIsolated) {
  auto mock = mock_chat_provider(
      {{"Temi", 0.25, R"({"Temi": [{"nome": "A", "categorie": [0]}]})"},
       {"Temi", 0.75, R"({"Temi": [{"nome": "B", "categorie": [1]}]})"}});
  const auto out = sweep_temperatures(codebook(2), builtin_template("it-theming"), *mock,
                                      {0.25, 0.5, 0.75}, opts());
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].run->set.themes[0].name, "A");
  EXPECT_DOUBLE_EQ(out[0].run->set.temperature, 0.25);
  EXPECT_FALSE(out[1].run.has_value());
  EXPECT_EQ(out[1].code, ExitCode::kProvider);
  EXPECT_EQ(out[2].run->set.themes[0].name, "B");
  EXPECT_THROW(sweep_temperatures(codebook(2), builtin_template("it-theming"), *mock, {3.0}, opts()),
               UsageError);
}

TEST(ThemeSetJson, RoundTrip) {
  ThemeSet set{.run_id = "r1", .temperature = 0.25, .min_themes = 9,
               .themes = {{"Dati", "desc, \"quoted\"", {0, 4}}, {"Privacy", "", {2}}},
               .raw_response_path = "raw/themes_T0.25.txt",
               .warnings = {"below minimum: 2 themes, 9 requested"}};
  EXPECT_EQ(theme_set_from_json(to_json(set)), set);
  testing::TempDir dir;
  const auto path = dir / theme_set_filename(0.25);
  EXPECT_EQ(path.filename(), "themes_T0.25.json");
  save_theme_set(set, path);
  EXPECT_EQ(load_theme_set(path), set);
  EXPECT_THROW(theme_set_from_json(nlohmann::json::object()), ParseError);
  EXPECT_EQ(theme_set_filename(0.0), "themes_T0.json");
}

// ---------------------------------------------------------------------------

ThemeSet set_of(double t, std::vector<std::string> names) {
  ThemeSet s;
  s.run_id = "r";
  s.temperature = t;
  for (auto& n : names) s.themes.push_back({n, "", {0}});
  return s;
}

TEST(Stability, RecurringThemesClusterAndOutliersStandAlone) {
  MockEmbeddingProvider embedder(512);
  const std::vector<ThemeSet> sets{
      set_of(0.75, {"privacy dei dati personali", "musica barocca"}),
      set_of(0.25, {"dati personali e privacy", "conservazione dei materiali"}),
      set_of(0.5, {"privacy e dati personali", "conservazione materiali"})};
  const auto report = stability(sets, embedder, 0.7);
  ASSERT_EQ(report.runs.size(), 3u);
  EXPECT_DOUBLE_EQ(report.runs[0].temperature, 0.25);
  ASSERT_EQ(report.clusters.size(), 2u);
  EXPECT_EQ(report.clusters[0].name, "dati personali e privacy");
  EXPECT_EQ(report.clusters[0].members.size(), 3u);
  EXPECT_EQ(report.clusters[0].scores.size(), 3u);
  ASSERT_EQ(report.singletons.size(), 1u);
  EXPECT_EQ(report.singletons[0].name, "musica barocca");
  EXPECT_EQ(report.embedder_id, "mock-hash-512");
}

TEST(Stability, IdenticalSetsClusterCompletelyEvenAtThresholdOne) {
  MockEmbeddingProvider embedder(64);
  const auto s = set_of(0, {"alfa beta", "gamma delta", "epsilon"});
  auto t = s;
  t.temperature = 0.5;
  const auto report = stability({s, t}, embedder, 1.0);
  EXPECT_EQ(report.clusters.size(), 3u);
  EXPECT_TRUE(report.singletons.empty());
}

TEST(Stability, Preconditions) {
  MockEmbeddingProvider embedder(64);
  EXPECT_THROW(stability({set_of(0, {"a"})}, embedder), UsageError);
  EXPECT_THROW(stability({set_of(0, {"a"}), set_of(1, {"a"})}, embedder, 0.0), UsageError);
}

TEST(Stability, PropertiesOnRandomSets) {
  std::mt19937 rng(11);
  const std::vector<std::string> words{"dati", "privacy", "archivio", "metodo", "fonti",
                                       "edizione", "museo", "codice", "testo", "rete"};
  MockEmbeddingProvider embedder(32);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<ThemeSet> sets;
    const std::size_t runs = 2 + rng() % 3;
    std::size_t total = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      std::vector<std::string> names(1 + rng() % 6);
      for (auto& n : names) {
        n = words[rng() % words.size()] + " " + words[rng() % words.size()];
      }
      total += names.size();
      sets.push_back(set_of(0.25 * static_cast<double>(r), names));
    }
    std::shuffle(sets.begin(), sets.end(), rng);
    const double threshold = 0.5 + 0.1 * static_cast<double>(rng() % 5);
    const auto report = stability(sets, embedder, threshold);

    // Every theme lands in exactly one place.
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& m : report.singletons) EXPECT_TRUE(seen.insert({m.run, m.theme}).second);
    for (const auto& c : report.clusters) {
      ASSERT_GE(c.members.size(), 2u);
      std::set<std::size_t> runs_in_cluster;
      for (const auto& m : c.members) {
        EXPECT_TRUE(seen.insert({m.run, m.theme}).second);
        EXPECT_TRUE(runs_in_cluster.insert(m.run).second) << "two themes from one run";
      }
      // Named after the lowest-temperature member.
      EXPECT_EQ(c.name, c.members.front().name);
      for (const auto& m : c.members) EXPECT_LE(c.members.front().run, m.run);
      EXPECT_EQ(c.scores.size(), c.members.size() * (c.members.size() - 1) / 2);
    }
    EXPECT_EQ(seen.size(), total);
    for (std::size_t r = 1; r < report.runs.size(); ++r) {
      EXPECT_LT(report.runs[r - 1].temperature, report.runs[r].temperature);
    }
    // Input order does not matter once temperatures are distinct.
    auto reversed = sets;
    std::reverse(reversed.begin(), reversed.end());
    EXPECT_EQ(to_json(stability(reversed, embedder, threshold)), to_json(report));
  }
}

}  // namespace
}  // namespace thema
