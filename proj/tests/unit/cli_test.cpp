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

#include "thema/cli.hpp"

#include <cstdlib>
#include <memory>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "golden.hpp"
#include "json.hpp"
#include "study_fixtures.hpp"
#include "temp_dir.hpp"
#include "thema/coding.hpp"
#include "thema/csv.hpp"
#include "thema/text.hpp"
#include "thema/theming.hpp"

namespace thema {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using testing::TempDir;

struct Result {
  int rc = 0;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = std::make_unique<TempDir>("thema-cli-fixtures");
    paths_ = fixtures::write_study_fixtures(root_->path());
  }
  static void TearDownTestSuite() { root_.reset(); }

  void SetUp() override {
    ::unsetenv("THEMA_API_KEY");
    ::unsetenv("THEMA_EMBED_API_KEY");
    ::unsetenv("THEMA_CONFIG");
  }

  Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int rc = run_cli(args, out, err);
    return {rc, out.str(), err.str()};
  }

  // Subcommand plus the mock config and a private output root.
  std::vector<std::string> base(const std::string& cmd) {
    return {cmd, "--config", paths_.config.string(), "--out", (work_ / "runs").string()};
  }

  fs::path run_dir(const std::string& id) { return work_.path() / "runs" / id; }

  static std::unique_ptr<TempDir> root_;
  static fixtures::Paths paths_;
  TempDir work_{"thema-cli"};
};

std::unique_ptr<TempDir> CliTest::root_;
fixtures::Paths CliTest::paths_;

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST_F(CliTest, CodeWritesCodebookAndSummaryLine) {
  const auto r = cli(base("code") + std::vector<std::string>{"--run-id", "c1"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("185 codes from 19 transcripts"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("  intervista_14: 11 codes"), std::string::npos);
  const auto cb = codebook_from_csv(run_dir("c1") / "codebook.csv");
  EXPECT_EQ(cb.codes.size(), 185u);
  for (const auto& [id, n] : cb.per_transcript_counts) {
    EXPECT_GE(n, 9u) << id;
    EXPECT_LE(n, 11u) << id;
  }
  EXPECT_TRUE(fs::exists(run_dir("c1") / "saturation.json"));
  EXPECT_TRUE(fs::exists(run_dir("c1") / "raw" / "intervista_01.json.txt"));
  const auto manifest = json::parse(text::read_file(run_dir("c1") / "manifest.json"));
  EXPECT_EQ(manifest["config"]["chat"]["coding_model"], "gpt-3.5-turbo");
  EXPECT_EQ(manifest["prompt_fingerprints"]["coding"],
            text::sha256_hex(builtin_template("it-coding").body));
}

TEST_F(CliTest, MissingCorpusNamesPath) {
  const auto missing = (work_ / "nowhere").string();
  const auto r = cli(base("code") + std::vector<std::string>{"--corpus", missing});
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(work_ / "runs"));
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).rc, 1);
  EXPECT_EQ(cli({"frobnicate"}).rc, 1);
  EXPECT_EQ(cli(base("themes") + std::vector<std::string>{"--min-themes", "zero"}).rc, 1);
  EXPECT_EQ(cli(base("refine") + std::vector<std::string>{"--temps", "0.5,3"}).rc, 1);
  EXPECT_EQ(cli({"--help"}).rc, 0);
}

TEST_F(CliTest, DryRunPrintsPromptsAndWritesNothing) {
  const auto r = cli(base("code") + std::vector<std::string>{"--dry-run"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("```Intervista n. 01"), std::string::npos);
  EXPECT_NE(r.out.find("gpt-3.5-turbo"), std::string::npos);
  EXPECT_FALSE(fs::exists(work_ / "runs"));
}

TEST_F(CliTest, ThemesProducesNineThemesWithValidIndices) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "t1"}).rc, 0);
  const auto codebook = (run_dir("t1") / "codebook.csv").string();
  const auto r = cli(base("themes") + std::vector<std::string>{"--codebook", codebook});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto set = load_theme_set(run_dir("t1") / "themes_T0.json");
  EXPECT_EQ(set.themes.size(), 9u);
  EXPECT_EQ(set.min_themes, 9u);
  for (const auto& t : set.themes) {
    EXPECT_FALSE(t.code_indices.empty()) << t.name;
    for (const auto i : t.code_indices) EXPECT_LT(i, 185u);
  }
  EXPECT_EQ(set.themes[0].name, "Metodologie e Standard di Ricerca");
}

TEST_F(CliTest, MinThemesReachesThePrompt) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "m1"}).rc, 0);
  const auto codebook = (run_dir("m1") / "codebook.csv").string();
  const auto r = cli(base("themes") +
                     std::vector<std::string>{"--codebook", codebook, "--min-themes", "12", "--dry-run"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("(almeno 12)"), std::string::npos);
  EXPECT_FALSE(fs::exists(run_dir("m1") / "themes_T0.json"));
}

TEST_F(CliTest, FlagsBeatConfigFileAndEnvSelectsConfig) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "p1"}).rc, 0);
  const auto codebook = (run_dir("p1") / "codebook.csv").string();
  // Config file: min_themes 12 via a config that layers on the fixture one.
  json cfg = json::parse(text::read_file(paths_.config));
  cfg["theming"]["min_themes"] = 12;
  cfg["corpus"] = paths_.corpus.string();
  cfg["chat"]["fixtures"] = paths_.fixtures.string();
  for (const char* k : {"reference", "pairs", "scores"}) cfg["eval"].erase(k);
  const auto cfg_path = work_ / "layered.json";
  text::write_file_atomic(cfg_path, cfg.dump());

  ::setenv("THEMA_CONFIG", cfg_path.c_str(), 1);
  const auto from_env = cli({"themes", "--codebook", codebook, "--dry-run"});
  ASSERT_EQ(from_env.rc, 0) << from_env.err;
  EXPECT_NE(from_env.out.find("(almeno 12)"), std::string::npos);

  const auto flag_wins =
      cli({"themes", "--codebook", codebook, "--dry-run", "--min-themes", "10"});
  EXPECT_NE(flag_wins.out.find("(almeno 10)"), std::string::npos);

  const auto defaults = cli({"themes", "--codebook", codebook, "--dry-run", "--config",
                             (work_ / "missing.json").string()});
  EXPECT_EQ(defaults.rc, 1);
}

TEST_F(CliTest, BadCodebookPathFails) {
  const auto r = cli(base("themes") +
                     std::vector<std::string>{"--codebook", (work_ / "none.csv").string()});
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("none.csv"), std::string::npos);
}

TEST_F(CliTest, RefineSweepsAndReportsSingletons) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "r1"}).rc, 0);
  const auto codebook = (run_dir("r1") / "codebook.csv").string();
  ASSERT_EQ(cli(base("themes") + std::vector<std::string>{"--codebook", codebook}).rc, 0);
  const auto r = cli(base("refine") + std::vector<std::string>{"--codebook", codebook});
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const char* f : {"themes_T0.25.json", "themes_T0.5.json", "themes_T0.75.json",
                        "stability.json", "stability.md"}) {
    EXPECT_TRUE(fs::exists(run_dir("r1") / f)) << f;
  }
  EXPECT_NE(r.out.find("possibly not relevant"), std::string::npos) << r.out;
  const auto doc = json::parse(text::read_file(run_dir("r1") / "stability.json"));
  EXPECT_EQ(doc["runs"].size(), 4u);  // T=0 joins the three sweep runs
  std::set<std::string> singles;
  for (const auto& s : doc["singletons"]) singles.insert(s["name"].get<std::string>());
  const auto expected = fixtures::expected_singletons();
  EXPECT_EQ(singles, std::set<std::string>(expected.begin(), expected.end()));
}

TEST_F(CliTest, RefineWithSingleTemperature) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "s1"}).rc, 0);
  const auto codebook = (run_dir("s1") / "codebook.csv").string();
  ASSERT_EQ(cli(base("themes") + std::vector<std::string>{"--codebook", codebook}).rc, 0);
  const auto r = cli(base("refine") + std::vector<std::string>{"--codebook", codebook, "--temps", "0.5"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_TRUE(fs::exists(run_dir("s1") / "themes_T0.5.json"));
  EXPECT_FALSE(fs::exists(run_dir("s1") / "themes_T0.25.json"));
  const auto doc = json::parse(text::read_file(run_dir("s1") / "stability.json"));
  EXPECT_EQ(doc["runs"].size(), 2u);
}

TEST_F(CliTest, EvalModesGiveDistinctMatrices) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "e1"}).rc, 0);
  const auto codebook = (run_dir("e1") / "codebook.csv").string();
  ASSERT_EQ(cli(base("themes") + std::vector<std::string>{"--codebook", codebook}).rc, 0);
  const auto themes = (run_dir("e1") / "themes_T0.json").string();
  const auto names = cli(base("eval") + std::vector<std::string>{"--themes", themes});
  ASSERT_EQ(names.rc, 0) << names.err;
  EXPECT_NE(names.out.find("diagonal: "), std::string::npos);
  EXPECT_NE(names.out.find("/7 above 0.6"), std::string::npos);
  EXPECT_NE(names.out.find("human scores: 2 at maximum, min 8"), std::string::npos);
  EXPECT_NE(names.out.find("unpaired: Valutazione della ricerca"), std::string::npos);
  const auto full = cli(base("eval") + std::vector<std::string>{
                                           "--themes", themes, "--embed-text", "names+descriptions"});
  ASSERT_EQ(full.rc, 0) << full.err;
  const auto a = text::read_file(run_dir("e1") / "eval/similarity_names.csv");
  const auto b = text::read_file(run_dir("e1") / "eval/similarity_names_descriptions.csv");
  EXPECT_NE(a, b);
  const auto svg = text::read_file(run_dir("e1") / "eval/similarity_names_descriptions.svg");
  EXPECT_NE(svg.find("names+descriptions"), std::string::npos);
  EXPECT_TRUE(fs::exists(run_dir("e1") / "eval/human_scores.svg"));
}

TEST_F(CliTest, EvalReportsLabelMismatchWithBothLists) {
  ASSERT_EQ(cli(base("code") + std::vector<std::string>{"--run-id", "x1"}).rc, 0);
  const auto codebook = (run_dir("x1") / "codebook.csv").string();
  ASSERT_EQ(cli(base("themes") + std::vector<std::string>{"--codebook", codebook}).rc, 0);
  const auto pairs = work_ / "pairs.csv";
  text::write_file_atomic(pairs, "row_label,col_label\r\nMusica,Teatro\r\n");
  const auto r = cli(base("eval") + std::vector<std::string>{
                                        "--themes", (run_dir("x1") / "themes_T0.json").string(),
                                        "--pairs", pairs.string()});
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("Musica"), std::string::npos);
  EXPECT_NE(r.err.find("known rows"), std::string::npos);
}

TEST_F(CliTest, ComparePromptsItalianVsEnglish) {
  const auto r = cli(base("compare-prompts") +
                     std::vector<std::string>{"--transcript", fixtures::kCompareTranscript,
                                              "--run-id", "cp"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("template a (it-coding): 11 codes"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("template b (en-coding): 11 codes"), std::string::npos);
  EXPECT_FALSE(fs::is_empty(run_dir("cp") / "compare"));
}

TEST_F(CliTest, ComparePromptsIdenticalTemplateGivesUnitDiagonal) {
  const auto r = cli(base("compare-prompts") +
                     std::vector<std::string>{"--transcript", fixtures::kCompareTranscript,
                                              "--template-b", "it-coding", "--run-id", "same"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("11/11 above 0.6"), std::string::npos) << r.out;
  fs::path matrix;
  for (const auto& e : fs::directory_iterator(run_dir("same") / "compare")) {
    if (e.path().extension() == ".csv" &&
        e.path().filename().string().starts_with("similarity")) {
      matrix = e.path();
    }
  }
  ASSERT_FALSE(matrix.empty());
  const auto rows = csv::read_file(matrix);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][i], "1.0000");
}

TEST_F(CliTest, ComparePromptsRejectsThemingTemplate) {
  const auto r = cli(base("compare-prompts") +
                     std::vector<std::string>{"--transcript", fixtures::kCompareTranscript,
                                              "--template-b", "it-theming"});
  EXPECT_EQ(r.rc, 1);
  EXPECT_FALSE(fs::exists(work_ / "runs"));
}

TEST_F(CliTest, FullRunProducesCompleteDirectory) {
  const auto r = cli(base("run") + std::vector<std::string>{"--run-id", "full"});
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const char* f : {"manifest.json", "codebook.csv", "saturation.json", "themes_T0.json",
                        "themes_T0.25.json", "stability.json", "eval/similarity_names.csv",
                        "eval/similarity_names.svg", "summary.md", "run.log"}) {
    EXPECT_TRUE(fs::exists(run_dir("full") / f)) << f;
  }
  const auto manifest = json::parse(text::read_file(run_dir("full") / "manifest.json"));
  for (const auto& [name, rel] : manifest["files"].items()) {
    EXPECT_TRUE(fs::exists(run_dir("full") / rel.get<std::string>())) << name;
  }
  const auto summary = text::read_file(run_dir("full") / "summary.md");
  EXPECT_NE(summary.find("185 codes from 19 transcripts"), std::string::npos);
  EXPECT_NE(summary.find("Possibly not relevant"), std::string::npos);
}

TEST_F(CliTest, RunWithoutReferenceSkipsEvaluation) {
  const auto r = cli(base("run") + std::vector<std::string>{"--run-id", "noref", "--reference", ""});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_FALSE(fs::exists(run_dir("noref") / "eval"));
  const auto summary = text::read_file(run_dir("noref") / "summary.md");
  EXPECT_NE(summary.find("evaluation skipped: no reference file"), std::string::npos);
}

TEST_F(CliTest, RerunIsByteIdenticalAndMatchesGoldens) {
  const auto first = cli(base("run") + std::vector<std::string>{"--run-id", "golden"});
  ASSERT_EQ(first.rc, 0) << first.err;
  TempDir other;
  const auto second = cli({"run", "--config", paths_.config.string(), "--out",
                           (other / "runs").string(), "--run-id", "golden", "--parallel", "1"});
  ASSERT_EQ(second.rc, 0) << second.err;
  for (const char* f : {"codebook.csv", "eval/similarity_names.csv", "eval/similarity_names.svg",
                        "eval/human_scores.csv", "eval/human_scores.svg", "stability.json",
                        "themes_T0.json"}) {
    EXPECT_EQ(text::read_file(run_dir("golden") / f),
              text::read_file(other / "runs" / "golden" / f))
        << f;
  }
  testing::expect_golden("run_codebook.csv", text::read_file(run_dir("golden") / "codebook.csv"));
  testing::expect_golden("run_similarity_names.csv",
                         text::read_file(run_dir("golden") / "eval/similarity_names.csv"));
  testing::expect_golden("run_similarity_names.svg",
                         text::read_file(run_dir("golden") / "eval/similarity_names.svg"));
}

TEST_F(CliTest, ProviderAndParseFailuresMapToExitCodes) {
  // A fixture set that answers nothing: every request is a provider error.
  const auto empty_fx = work_ / "fx_none";
  fs::create_directories(empty_fx);
  text::write_file_atomic(empty_fx / "fixtures.json",
                          R"([{"match": "never appears", "response": "x"}])");
  const auto provider = cli(base("code") + std::vector<std::string>{"--fixtures", empty_fx.string()});
  EXPECT_EQ(provider.rc, 2) << provider.err;

  const auto prose_fx = work_ / "fx_prose";
  fs::create_directories(prose_fx);
  text::write_file_atomic(prose_fx / "fixtures.json",
                          R"([{"match": "Intervista", "response": "Non posso farlo."}])");
  const auto parse = cli(base("code") + std::vector<std::string>{"--fixtures", prose_fx.string()});
  EXPECT_EQ(parse.rc, 3) << parse.err;
}

TEST_F(CliTest, PartialFailureExitsZeroWithWarnings) {
  // Answer everything except interview 07.
  json fx = json::parse(text::read_file(paths_.fixtures / "fixtures.json"));
  json kept = json::array();
  for (auto& f : fx) {
    if (f["match"].get<std::string>().find("Intervista n. 07") != std::string::npos) continue;
    if (f.contains("response_file")) {
      f["response_file"] = (paths_.fixtures / f["response_file"].get<std::string>()).string();
    }
    kept.push_back(f);
  }
  const auto dir = work_ / "fx_partial";
  fs::create_directories(dir);
  text::write_file_atomic(dir / "fixtures.json", kept.dump());
  const auto r = cli(base("code") + std::vector<std::string>{"--fixtures", dir.string(),
                                                             "--run-id", "part"});
  EXPECT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.err.find("intervista_07"), std::string::npos) << r.err;
  const auto manifest = json::parse(text::read_file(run_dir("part") / "manifest.json"));
  ASSERT_EQ(manifest["failures"].size(), 1u);
  EXPECT_LT(codebook_from_csv(run_dir("part") / "codebook.csv").codes.size(), 185u);
}

TEST_F(CliTest, CredentialsNeverReachOutputOrArtifacts) {
  const std::string secret = "sk-unit-test-9f2c";
  ::setenv("THEMA_API_KEY", secret.c_str(), 1);
  const auto missing = (work_ / secret).string();
  const auto r = cli(base("code") + std::vector<std::string>{"--corpus", missing});
  EXPECT_EQ(r.rc, 1);
  EXPECT_EQ(r.err.find(secret), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("***"), std::string::npos);

  const auto ok = cli(base("code") + std::vector<std::string>{"--run-id", "sec"});
  ASSERT_EQ(ok.rc, 0);
  for (const auto& e : fs::recursive_directory_iterator(run_dir("sec"))) {
    if (e.is_regular_file()) {
      EXPECT_EQ(text::read_file(e.path()).find(secret), std::string::npos) << e.path();
    }
  }
}

}  // namespace
}  // namespace thema
