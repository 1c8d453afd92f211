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

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "thema/coding.hpp"
#include "thema/config.hpp"
#include "thema/corpus.hpp"
#include "thema/evaluation.hpp"
#include "thema/llm.hpp"
#include "thema/prompting.hpp"
#include "thema/reporting.hpp"
#include "thema/text.hpp"
#include "thema/theming.hpp"

namespace thema {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

// Serializes terminal output and mirrors it into the run log. Credentials
// are scrubbed from every line before it leaves this class.
class Console {
 public:
  Console(std::ostream& out, std::ostream& err) : out_(out), err_(err) {
    secrets_ = {env("THEMA_API_KEY"), env("THEMA_EMBED_API_KEY")};
  }

  void attach(RunLog* log) { log_ = log; }

  void info(std::string_view line) { emit(out_, "", line); }
  void warn(std::string_view line) { emit(err_, "warning: ", line); }
  void error(std::string_view line) { emit(err_, "error: ", line); }

 private:
  void emit(std::ostream& os, std::string_view prefix, std::string_view line) {
    std::string s = std::string(prefix) + std::string(line);
    for (const auto& secret : secrets_) s = text::scrub(s, secret);
    std::lock_guard lock(mu_);
    os << s << '\n';
    if (log_) log_->add(s);
  }

  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::string> secrets_;
  RunLog* log_ = nullptr;
  std::mutex mu_;
};

struct Flags {
  std::string config;
  std::optional<std::string> corpus, lang, out, chat_provider, chat_url,
      coding_model, theming_model, fixtures, embed_provider, embed_url,
      embed_model, coding_template, theming_template, embed_text, reference,
      pairs, scores, temps;
  std::optional<std::size_t> min_themes, embed_dim, parallel;
  std::optional<double> temperature, threshold, stability_threshold;
  std::string run_id;
  bool dry_run = false;

  std::string codebook;
  std::string themes;
  std::string transcript;
  std::string template_a;
  std::string template_b;
  std::string compare_pairs;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig c;
  const std::string file = f.config.empty() ? env("THEMA_CONFIG") : f.config;
  if (!file.empty()) apply_config_file(c, file);
  const auto set = [](auto& into, const auto& opt) {
    if (opt) into = *opt;
  };
  set(c.corpus_dir, f.corpus);
  set(c.language, f.lang);
  set(c.output_root, f.out);
  set(c.chat.provider, f.chat_provider);
  set(c.chat.url, f.chat_url);
  set(c.chat.coding_model, f.coding_model);
  set(c.chat.theming_model, f.theming_model);
  set(c.chat.fixtures, f.fixtures);
  set(c.embedding.provider, f.embed_provider);
  set(c.embedding.url, f.embed_url);
  set(c.embedding.model, f.embed_model);
  set(c.embedding.dimension, f.embed_dim);
  set(c.coding_template, f.coding_template);
  set(c.theming_template, f.theming_template);
  set(c.embed_text, f.embed_text);
  set(c.reference, f.reference);
  set(c.pairs, f.pairs);
  set(c.scores, f.scores);
  set(c.min_themes, f.min_themes);
  set(c.parallelism, f.parallel);
  set(c.theming_temperature, f.temperature);
  set(c.diagonal_threshold, f.threshold);
  set(c.stability_threshold, f.stability_threshold);
  if (f.temps) c.sweep_temperatures = parse_temperature_list(*f.temps);
  validate(c);
  return c;
}

void add_stats(PhaseStats& s, const ChatResponse& r) {
  s.input_tokens += r.usage.input;
  s.output_tokens += r.usage.output;
  s.requests += r.attempts;
  s.retries += r.attempts - 1;
}

// One invocation's state: configuration, providers and the run directory.
class Session {
 public:
  Session(RunConfig cfg, Console& console, bool dry_run)
      : cfg_(std::move(cfg)), console_(console), dry_run_(dry_run) {}
  ~Session() { console_.attach(nullptr); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const RunConfig& cfg() const { return cfg_; }
  Console& console() { return console_; }
  bool dry_run() const { return dry_run_; }
  const fs::path& dir() const { return dir_; }
  RunManifest& manifest() { return manifest_; }
  const std::string& run_id() const { return manifest_.run_id; }

  void open_fresh(const std::string& run_id) {
    const std::string id = run_id.empty() ? make_run_id() : run_id;
    open(fs::path(cfg_.output_root) / id, id);
  }

  // Continues the run that owns `artifact` (a file inside a run directory).
  void open_existing(const fs::path& artifact) {
    fs::path dir = artifact.parent_path();
    if (dir.empty()) dir = ".";
    open(dir, fs::absolute(dir).lexically_normal().filename().string());
  }

  ChatProvider& chat() {
    if (!chat_) chat_ = make_chat();
    return *chat_;
  }

  EmbeddingProvider& embedder() {
    if (!embed_) embed_ = make_embedder();
    return *embed_;
  }

  void index(const std::string& name, const fs::path& path) {
    manifest_.file_index[name] = fs::relative(path, dir_).generic_string();
  }

  void note(std::string s) { manifest_.notes.push_back(std::move(s)); }

  void save() {
    if (dry_run_ || dir_.empty()) return;
    manifest_.config_snapshot = to_json(cfg_);
    text::write_file_atomic(dir_ / "run.log", log_.text());
    manifest_.file_index["log"] = "run.log";
    write_manifest(manifest_, dir_);
  }

 private:
  void open(const fs::path& dir, const std::string& id) {
    dir_ = dir;
    if (!dry_run_) {
      fs::create_directories(dir_);
      manifest_ = load_or_create_manifest(dir_, id);
    } else {
      manifest_.run_id = id;
    }
    console_.attach(&log_);
  }

  EventSink events() {
    return [this](std::string_view e) { console_.warn(e); };
  }

  std::shared_ptr<ChatProvider> make_chat() {
    if (cfg_.chat.provider == "mock") {
      if (cfg_.chat.fixtures.empty()) {
        throw UsageError("the mock chat provider needs a fixtures directory");
      }
      return std::make_shared<MockChatProvider>(load_fixtures(cfg_.chat.fixtures),
                                                cfg_.chat.coding_model);
    }
    EndpointOptions o;
    o.url = cfg_.chat.url;
    o.model = cfg_.chat.coding_model;
    o.api_key = env("THEMA_API_KEY");
    if (o.api_key.empty()) throw UsageError("THEMA_API_KEY is not set");
    o.timeout = std::chrono::seconds(cfg_.chat.timeout_s);
    o.requests_per_minute = cfg_.chat.requests_per_minute;
    o.max_parallel = static_cast<int>(cfg_.parallelism);
    o.events = events();
    return std::make_shared<HttpChatProvider>(std::move(o), make_default_transport());
  }

  std::shared_ptr<EmbeddingProvider> make_embedder() {
    if (cfg_.embedding.provider == "mock") {
      return mock_embedding_provider(cfg_.embedding.dimension);
    }
    EndpointOptions o;
    o.url = cfg_.embedding.url;
    o.model = cfg_.embedding.model;
    o.api_key = env("THEMA_EMBED_API_KEY");
    if (o.api_key.empty()) o.api_key = env("THEMA_API_KEY");
    if (o.api_key.empty()) {
      throw UsageError("THEMA_EMBED_API_KEY (or THEMA_API_KEY) is not set");
    }
    o.timeout = std::chrono::seconds(cfg_.embedding.timeout_s);
    o.requests_per_minute = cfg_.embedding.requests_per_minute;
    o.max_parallel = static_cast<int>(cfg_.parallelism);
    o.events = events();
    return std::make_shared<HttpEmbeddingProvider>(std::move(o),
                                                   make_default_transport());
  }

  RunConfig cfg_;
  Console& console_;
  bool dry_run_;
  fs::path dir_;
  RunManifest manifest_;
  RunLog log_;
  std::shared_ptr<ChatProvider> chat_;
  std::shared_ptr<EmbeddingProvider> embed_;
};

class Stopwatch {
 public:
  std::int64_t ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

PromptTemplate load_phase_template(const std::string& ref, Phase phase,
                                   std::string_view role) {
  PromptTemplate tpl = resolve_template(ref);
  if (tpl.phase != phase) {
    throw UsageError(fmt::format("{} template '{}' is a {} template, expected {}",
                                 role, tpl.id, to_string(tpl.phase),
                                 to_string(phase)));
  }
  return tpl;
}

std::vector<Transcript> load_configured_corpus(const RunConfig& cfg) {
  if (cfg.corpus_dir.empty()) throw UsageError("no corpus given (use --corpus)");
  return load_corpus(cfg.corpus_dir, cfg.language);
}

void note_temperature(RunManifest& m, double t) {
  if (std::find(m.temperatures.begin(), m.temperatures.end(), t) ==
      m.temperatures.end()) {
    m.temperatures.push_back(t);
    std::sort(m.temperatures.begin(), m.temperatures.end());
  }
}

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

struct CodeResult {
  Codebook codebook;
  SaturationReport saturation;
  double quote_audit = 0.0;
  std::vector<std::string> failures;
};

void dry_run_coding(Session& s, const std::vector<Transcript>& corpus,
                    const PromptTemplate& tpl) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    s.console().info(fmt::format(
        "# request {}/{}: coding transcript {} with {} at T={} (template {})",
        i + 1, corpus.size(), corpus[i].id, s.cfg().chat.coding_model,
        text::format_real(s.cfg().coding_temperature), tpl.id));
    s.console().info(render(tpl, {{std::string(kTextVar), corpus[i].text}}));
  }
}

CodeResult code_phase(Session& s, const std::vector<Transcript>& corpus,
                      const PromptTemplate& tpl) {
  const auto& cfg = s.cfg();
  CodingOptions opts;
  opts.model = cfg.chat.coding_model;
  opts.temperature = cfg.coding_temperature;
  opts.max_output_tokens = cfg.chat.max_output_tokens;
  opts.run_id = s.run_id();
  opts.expected_language = cfg.language;
  opts.max_parallel = cfg.parallelism;

  Stopwatch clock;
  CorpusCoding coding = code_corpus(corpus, tpl, s.chat(), opts);
  auto& stats = s.manifest().phases["coding"];
  stats = PhaseStats{};
  stats.duration_ms = clock.ms();

  const fs::path raw_dir = s.dir() / "raw";
  fs::create_directories(raw_dir);
  for (const auto& r : coding.results) {
    add_stats(stats, r.response);
    const auto path = raw_dir / (r.transcript_id + ".json.txt");
    text::write_file_atomic(path, r.raw_response);
    s.index("raw/" + r.transcript_id, path);
    for (const auto& w : r.diagnostics.warnings) {
      s.console().warn(fmt::format("{}: {}", r.transcript_id, w));
    }
  }
  for (const auto& w : coding.diagnostics.warnings) s.console().warn(w);

  CodeResult out;
  for (const auto& f : coding.failures) {
    if (!f.raw_response.empty()) {
      const auto path = raw_dir / (f.transcript_id + ".json.txt");
      text::write_file_atomic(path, f.raw_response);
      s.index("raw/" + f.transcript_id, path);
    }
    out.failures.push_back(fmt::format("coding {}: {}", f.transcript_id, f.message));
  }
  auto& failures = s.manifest().failures;
  failures.insert(failures.end(), out.failures.begin(), out.failures.end());
  s.manifest().model_ids["coding"] = cfg.chat.coding_model;
  s.manifest().prompt_fingerprints["coding"] = text::sha256_hex(tpl.body);
  note_temperature(s.manifest(), cfg.coding_temperature);

  for (const auto& r : coding.results) {
    s.console().info(fmt::format("  {}: {} codes", r.transcript_id, r.codes.size()));
  }
  for (const auto& f : coding.failures) {
    s.console().warn(fmt::format("{}: coding failed: {}", f.transcript_id, f.message));
  }

  if (coding.results.empty()) {
    s.save();
    throw Error(fmt::format("coding failed for all {} transcripts", corpus.size()),
                coding.failures.empty() ? ExitCode::kProvider
                                        : coding.failures.front().code);
  }

  out.codebook = std::move(coding.codebook);
  const auto csv_path = s.dir() / "codebook.csv";
  codebook_to_csv(out.codebook, csv_path);
  s.index("codebook", csv_path);

  out.saturation = saturation(out.codebook);
  out.quote_audit = quote_audit(out.codebook, corpus);
  const json sat = {{"total_codes", out.saturation.total_codes},
                    {"unique_codes", out.saturation.unique_codes},
                    {"ratio_total_to_unique", out.saturation.ratio_total_to_unique},
                    {"normalization", out.saturation.normalization},
                    {"quotes_found_verbatim", out.quote_audit}};
  const auto sat_path = s.dir() / "saturation.json";
  text::write_file_atomic(sat_path, sat.dump(2) + "\n");
  s.index("saturation", sat_path);

  std::string line = fmt::format("{} codes from {} transcripts",
                                 out.codebook.codes.size(),
                                 out.codebook.per_transcript_counts.size());
  if (!coding.failures.empty()) {
    line += fmt::format(" ({} failed)", coding.failures.size());
  }
  s.console().info(line);
  s.console().info(fmt::format(
      "saturation: {} total / {} unique = {}", out.saturation.total_codes,
      out.saturation.unique_codes,
      text::format_fixed(out.saturation.ratio_total_to_unique, 3)));
  return out;
}

ThemingOptions theming_options(Session& s) {
  ThemingOptions opts;
  opts.model = s.cfg().chat.theming_model;
  opts.temperature = s.cfg().theming_temperature;
  opts.min_themes = s.cfg().min_themes;
  opts.max_output_tokens = s.cfg().chat.max_output_tokens;
  opts.run_id = s.run_id();
  opts.max_parallel = s.cfg().parallelism;
  return opts;
}

std::string raw_theme_name(double t) {
  return fmt::format("themes_T{}.txt", text::format_real(t));
}

void print_theme_set(Session& s, const ThemeSet& set) {
  s.console().info(fmt::format("T={}: {} themes", text::format_real(set.temperature),
                               set.themes.size()));
  for (std::size_t i = 0; i < set.themes.size(); ++i) {
    s.console().info(fmt::format("  {}. {} ({} codes)", i + 1, set.themes[i].name,
                                 set.themes[i].code_indices.size()));
  }
  for (const auto& w : set.warnings) {
    s.console().warn(fmt::format("T={}: {}", text::format_real(set.temperature), w));
  }
}

// Saves the set and its raw response; returns the theme file path.
fs::path store_theme_run(Session& s, ThemeRun& run) {
  const fs::path raw_dir = s.dir() / "raw";
  fs::create_directories(raw_dir);
  const auto raw_path = raw_dir / raw_theme_name(run.set.temperature);
  text::write_file_atomic(raw_path, run.raw_response);
  run.set.raw_response_path = fs::relative(raw_path, s.dir()).generic_string();
  const auto file = s.dir() / theme_set_filename(run.set.temperature);
  save_theme_set(run.set, file);
  const std::string key = fs::path(theme_set_filename(run.set.temperature)).stem().string();
  s.index(key, file);
  s.index("raw/" + key, raw_path);
  note_temperature(s.manifest(), run.set.temperature);
  return file;
}

void store_failed_raw(Session& s, double t, const std::string& raw) {
  if (raw.empty()) return;
  const fs::path raw_dir = s.dir() / "raw";
  fs::create_directories(raw_dir);
  const auto path = raw_dir / raw_theme_name(t);
  text::write_file_atomic(path, raw);
  s.index("raw/" + fs::path(theme_set_filename(t)).stem().string(), path);
}

ThemeSet themes_phase(Session& s, const Codebook& cb, const PromptTemplate& tpl) {
  Stopwatch clock;
  s.manifest().model_ids["theming"] = s.cfg().chat.theming_model;
  s.manifest().prompt_fingerprints["theming"] = text::sha256_hex(tpl.body);
  const double t = s.cfg().theming_temperature;
  ThemeRun run;
  try {
    run = generate_themes(cb, tpl, s.chat(), theming_options(s));
  } catch (const ResponseParseError& e) {
    store_failed_raw(s, t, e.raw());
    s.manifest().failures.push_back(fmt::format("themes T={}: {}", text::format_real(t), e.what()));
    s.save();
    throw;
  } catch (const Error& e) {
    s.manifest().failures.push_back(fmt::format("themes T={}: {}", text::format_real(t), e.what()));
    s.save();
    throw;
  }
  auto& stats = s.manifest().phases["themes"];
  stats = PhaseStats{};
  add_stats(stats, run.response);
  stats.duration_ms = clock.ms();
  const auto file = store_theme_run(s, run);
  print_theme_set(s, run.set);
  s.console().info(fmt::format("wrote {}", file.string()));
  return run.set;
}

struct RefineResult {
  std::vector<ThemeSet> sets;  // successful sweep sets, in sweep order
  std::optional<StabilityReport> stability;
  std::vector<std::string> failures;
};

void print_stability(Session& s, const StabilityReport& r) {
  s.console().info(fmt::format("stability at threshold {}: {} recurring themes",
                               text::format_real(r.match_threshold), r.clusters.size()));
  for (const auto& c : r.clusters) {
    std::vector<std::string> temps;
    for (const auto& m : c.members) {
      temps.push_back(text::format_real(r.runs[m.run].temperature));
    }
    s.console().info(fmt::format("  {} (T={})", c.name, fmt::join(temps, ", ")));
  }
  s.console().info("possibly not relevant:");
  if (r.singletons.empty()) s.console().info("  none");
  for (const auto& m : r.singletons) {
    s.console().info(fmt::format("  {} (T={})", m.name,
                                 text::format_real(r.runs[m.run].temperature)));
  }
}

RefineResult refine_phase(Session& s, const Codebook& cb, const PromptTemplate& tpl,
                          const std::vector<ThemeSet>& prior) {
  Stopwatch clock;
  const auto& cfg = s.cfg();
  s.manifest().model_ids["theming"] = cfg.chat.theming_model;
  s.manifest().prompt_fingerprints["theming"] = text::sha256_hex(tpl.body);
  auto outcomes =
      sweep_temperatures(cb, tpl, s.chat(), cfg.sweep_temperatures, theming_options(s));

  RefineResult out;
  auto& stats = s.manifest().phases["refine"];
  stats = PhaseStats{};
  for (auto& o : outcomes) {
    if (o.run) {
      add_stats(stats, o.run->response);
      store_theme_run(s, *o.run);
      print_theme_set(s, o.run->set);
      out.sets.push_back(o.run->set);
    } else {
      store_failed_raw(s, o.temperature, o.raw_response);
      out.failures.push_back(
          fmt::format("themes T={}: {}", text::format_real(o.temperature), o.error));
      s.console().warn(out.failures.back());
    }
  }
  auto& failures = s.manifest().failures;
  failures.insert(failures.end(), out.failures.begin(), out.failures.end());
  if (out.sets.empty()) {
    stats.duration_ms = clock.ms();
    s.save();
    throw Error("every temperature in the sweep failed", outcomes.front().code);
  }

  std::vector<ThemeSet> all = prior;
  all.insert(all.end(), out.sets.begin(), out.sets.end());
  if (all.size() < 2) {
    s.console().warn("stability skipped: fewer than two theme sets");
    s.note("stability skipped: fewer than two theme sets");
  } else {
    out.stability = stability(all, s.embedder(), cfg.stability_threshold);
    const auto json_path = s.dir() / "stability.json";
    text::write_file_atomic(json_path, to_json(*out.stability).dump(2) + "\n");
    s.index("stability", json_path);
    const auto md_path = s.dir() / "stability.md";
    text::write_file_atomic(md_path, "# Theme stability\n\n" +
                                         stability_markdown(*out.stability));
    s.index("stability_table", md_path);
    s.manifest().model_ids["embedding"] = s.embedder().id();
    print_stability(s, *out.stability);
  }
  stats.duration_ms = clock.ms();
  return out;
}

bool descriptions_mode(const RunConfig& cfg) {
  return cfg.embed_text == "names+descriptions";
}

std::string mode_slug(const RunConfig& cfg) {
  return descriptions_mode(cfg) ? "names_descriptions" : "names";
}

LabeledTextSet reference_set(const std::vector<ReferenceCategory>& cats,
                             bool descriptions) {
  LabeledTextSet set{"reference", {}};
  for (const auto& c : cats) {
    std::string t = c.label;
    if (descriptions && c.detail && !text::is_blank(*c.detail)) t += ": " + *c.detail;
    set.items.push_back({c.label, t});
  }
  return set;
}

LabeledTextSet theme_set_texts(const ThemeSet& themes, bool descriptions) {
  LabeledTextSet set{"themes", {}};
  std::set<std::string> seen;
  for (std::size_t i = 0; i < themes.themes.size(); ++i) {
    const auto& t = themes.themes[i];
    std::string label = t.name;
    if (!seen.insert(label).second) {
      label = fmt::format("{} [{}]", t.name, i + 1);
      seen.insert(label);
    }
    set.items.push_back({label, descriptions ? theme_embedding_text(t) : t.name});
  }
  return set;
}

struct EvalResult {
  EvaluationArtifact artifact;
  std::optional<HumanScoreIngest> human;
};

void dry_run_eval(Session& s, const LabeledTextSet& rows, const LabeledTextSet& cols) {
  s.console().info(fmt::format(
      "# embedding request: {} reference texts and {} theme texts with {} (text mode {})",
      rows.items.size(), cols.items.size(),
      s.cfg().embedding.provider == "mock" ? "mock embedder" : s.cfg().embedding.model,
      s.cfg().embed_text));
  for (const auto& i : rows.items) s.console().info("  row: " + i.text);
  for (const auto& i : cols.items) s.console().info("  col: " + i.text);
}

EvalResult eval_phase(Session& s, const ThemeSet& themes) {
  const auto& cfg = s.cfg();
  if (cfg.reference.empty()) throw UsageError("no reference categories given (use --reference)");
  const bool desc = descriptions_mode(cfg);
  const auto rows = reference_set(load_reference_categories(cfg.reference), desc);
  const auto cols = theme_set_texts(themes, desc);
  if (s.dry_run()) {
    dry_run_eval(s, rows, cols);
    return {};
  }

  Stopwatch clock;
  const SimilarityMatrix full = similarity_matrix(rows, cols, s.embedder());
  s.manifest().model_ids["embedding"] = s.embedder().id();

  PairAlignment alignment;
  std::vector<std::string> unmatched;
  if (!cfg.pairs.empty()) {
    auto manual = load_manual_pairs(cfg.pairs, full.row_labels, full.col_labels);
    alignment = std::move(manual.alignment);
    unmatched = std::move(manual.unpaired_rows);
  } else {
    alignment = align_greedy(full);
    s.console().info("no pairs file: rows and columns paired greedily by similarity");
  }
  const SimilarityMatrix arranged = arrange_by_pairs(full, alignment);
  const DiagonalReport diag = diagonal_report(arranged, alignment, cfg.diagonal_threshold);

  const fs::path eval_dir = s.dir() / "eval";
  fs::create_directories(eval_dir);
  const std::string slug = mode_slug(cfg);
  const auto csv_path = eval_dir / fmt::format("similarity_{}.csv", slug);
  const auto svg_path = eval_dir / fmt::format("similarity_{}.svg", slug);
  export_matrix_csv(arranged, csv_path);
  render_heatmap_svg(arranged, svg_path, {},
                     fmt::format("Reference categories vs themes ({})", cfg.embed_text));
  const auto md_path = eval_dir / fmt::format("diagonal_{}.md", slug);
  text::write_file_atomic(md_path, diagonal_markdown(diag));
  s.index("eval/similarity_" + slug, csv_path);
  s.index("eval/heatmap_" + slug, svg_path);
  s.index("eval/diagonal_" + slug, md_path);

  EvalResult out;
  out.artifact.name = fmt::format("Reference categories vs themes at T={}",
                                  text::format_real(themes.temperature));
  out.artifact.csv_path = fs::relative(csv_path, s.dir()).generic_string();
  out.artifact.svg_path = fs::relative(svg_path, s.dir()).generic_string();
  out.artifact.diagonal = diag;
  out.artifact.text_mode = cfg.embed_text;
  out.artifact.unmatched = unmatched;

  s.console().info(fmt::format("diagonal: {}", diag.summary()));
  for (const auto& e : diag.flagged()) {
    s.console().info(fmt::format("  below {}: {} / {} = {}",
                                 text::format_real(cfg.diagonal_threshold), e.row_label,
                                 e.col_label, text::format_fixed(e.score, 2)));
  }
  for (const auto& u : unmatched) s.console().info(fmt::format("  unpaired: {}", u));

  if (!cfg.scores.empty()) {
    out.human = ingest_human_scores(cfg.scores, alignment);
    const auto hcsv = eval_dir / "human_scores.csv";
    const auto hsvg = eval_dir / "human_scores.svg";
    export_matrix_csv(out.human->overlay, hcsv);
    render_heatmap_svg(out.human->overlay, hsvg, {}, "Human similarity scores (normalized)");
    s.index("eval/human_scores", hcsv);
    s.index("eval/human_scores_heatmap", hsvg);
    s.console().info(fmt::format("human scores: {}", out.human->summary.text()));
    for (const auto& h : out.human->set.scores) {
      s.console().info(fmt::format("  {} / {}: {} -> {}", h.row_label, h.col_label,
                                   text::format_real(h.score),
                                   text::format_fixed(h.normalized(), 2)));
    }
  }
  auto& stats = s.manifest().phases["eval"];
  stats.duration_ms = clock.ms();
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_code(Session& s, const std::string& run_id) {
  const auto corpus = load_configured_corpus(s.cfg());
  const auto tpl = load_phase_template(s.cfg().coding_template_ref(), Phase::kCoding, "coding");
  if (s.dry_run()) {
    dry_run_coding(s, corpus, tpl);
    return 0;
  }
  s.chat();
  s.open_fresh(run_id);
  code_phase(s, corpus, tpl);
  s.save();
  s.console().info(fmt::format("run directory: {}", s.dir().string()));
  return 0;
}

Codebook load_codebook_arg(const std::string& path) {
  if (path.empty()) throw UsageError("no codebook given (use --codebook)");
  if (!fs::is_regular_file(path)) {
    throw UsageError(fmt::format("codebook not found: {}", path));
  }
  return codebook_from_csv(path);
}

void dry_run_theming(Session& s, const Codebook& cb, const PromptTemplate& tpl,
                     const std::vector<double>& temps) {
  const std::string prompt = render_theming_prompt(cb, tpl, s.cfg().min_themes);
  for (const double t : temps) {
    s.console().info(fmt::format("# request: themes with {} at T={} (template {})",
                                 s.cfg().chat.theming_model, text::format_real(t), tpl.id));
  }
  s.console().info(prompt);
}

int cmd_themes(Session& s, const Flags& f) {
  const Codebook cb = load_codebook_arg(f.codebook);
  const auto tpl = load_phase_template(s.cfg().theming_template_ref(), Phase::kTheming, "theming");
  if (s.dry_run()) {
    dry_run_theming(s, cb, tpl, {s.cfg().theming_temperature});
    return 0;
  }
  s.open_existing(f.codebook);
  themes_phase(s, cb, tpl);
  s.save();
  return 0;
}

int cmd_refine(Session& s, const Flags& f) {
  const Codebook cb = load_codebook_arg(f.codebook);
  const auto tpl = load_phase_template(s.cfg().theming_template_ref(), Phase::kTheming, "theming");
  if (s.dry_run()) {
    dry_run_theming(s, cb, tpl, s.cfg().sweep_temperatures);
    return 0;
  }
  s.open_existing(f.codebook);
  std::vector<ThemeSet> prior;
  const double t0 = s.cfg().theming_temperature;
  const auto& temps = s.cfg().sweep_temperatures;
  const auto prior_file = s.dir() / theme_set_filename(t0);
  if (std::find(temps.begin(), temps.end(), t0) == temps.end() &&
      fs::is_regular_file(prior_file)) {
    prior.push_back(load_theme_set(prior_file));
    s.console().info(fmt::format("including {}", prior_file.string()));
  }
  refine_phase(s, cb, tpl, prior);
  s.save();
  return 0;
}

int cmd_eval(Session& s, const Flags& f) {
  if (f.themes.empty()) throw UsageError("no theme set given (use --themes)");
  if (!fs::is_regular_file(f.themes)) {
    throw UsageError(fmt::format("theme set not found: {}", f.themes));
  }
  const ThemeSet themes = load_theme_set(f.themes);
  if (!s.dry_run()) s.open_existing(f.themes);
  eval_phase(s, themes);
  s.save();
  return 0;
}

int cmd_compare_prompts(Session& s, const Flags& f) {
  const auto& cfg = s.cfg();
  if (f.transcript.empty()) throw UsageError("no transcript id given (use --transcript)");
  const auto a = load_phase_template(
      f.template_a.empty() ? cfg.coding_template_ref() : f.template_a, Phase::kCoding,
      "template A");
  const auto b = load_phase_template(f.template_b.empty() ? "en-coding" : f.template_b,
                                     Phase::kCoding, "template B");
  const auto corpus = load_configured_corpus(cfg);
  const auto it = std::find_if(corpus.begin(), corpus.end(),
                               [&](const Transcript& t) { return t.id == f.transcript; });
  if (it == corpus.end()) {
    std::vector<std::string> ids;
    for (const auto& t : corpus) ids.push_back(t.id);
    throw UsageError(fmt::format("transcript '{}' not in corpus (available: {})",
                                 f.transcript, fmt::join(ids, ", ")));
  }
  if (s.dry_run()) {
    dry_run_coding(s, {*it}, a);
    dry_run_coding(s, {*it}, b);
    return 0;
  }
  s.chat();
  s.embedder();
  s.open_fresh(f.run_id);
  CodingOptions opts;
  opts.model = cfg.chat.coding_model;
  opts.temperature = cfg.coding_temperature;
  opts.max_output_tokens = cfg.chat.max_output_tokens;
  opts.run_id = s.run_id();
  opts.expected_language = cfg.language;
  s.manifest().model_ids["coding"] = cfg.chat.coding_model;
  s.manifest().prompt_fingerprints["template_a"] = text::sha256_hex(a.body);
  s.manifest().prompt_fingerprints["template_b"] = text::sha256_hex(b.body);
  note_temperature(s.manifest(), cfg.coding_temperature);

  Stopwatch clock;
  auto& stats = s.manifest().phases["compare"];
  const fs::path dir = s.dir() / "compare";
  fs::create_directories(dir);
  std::vector<Codebook> books;
  for (const auto* tpl : {&a, &b}) {
    const char* tag = tpl == &a ? "a" : "b";
    TranscriptCoding coding;
    try {
      coding = code_transcript(*it, *tpl, s.chat(), opts);
    } catch (const ResponseParseError& e) {
      const auto raw = dir / fmt::format("raw_{}.json.txt", tag);
      text::write_file_atomic(raw, e.raw());
      s.index(fmt::format("compare/raw_{}", tag), raw);
      s.manifest().failures.push_back(fmt::format("template {}: {}", tag, e.what()));
      s.save();
      throw;
    }
    add_stats(stats, coding.response);
    for (const auto& w : coding.diagnostics.warnings) {
      s.console().warn(fmt::format("template {}: {}", tag, w));
    }
    const auto raw = dir / fmt::format("raw_{}.json.txt", tag);
    text::write_file_atomic(raw, coding.raw_response);
    s.index(fmt::format("compare/raw_{}", tag), raw);
    books.push_back(aggregate_codebook({{it->id, coding.codes}}));
    const auto csv = dir / fmt::format("codes_{}.csv", tag);
    codebook_to_csv(books.back(), csv);
    s.index(fmt::format("compare/codes_{}", tag), csv);
    s.console().info(fmt::format("template {} ({}): {} codes", tag, tpl->id,
                                 coding.codes.size()));
  }

  std::optional<fs::path> pairs;
  if (!f.compare_pairs.empty()) pairs = f.compare_pairs;
  const auto cmp = compare_codebooks(books[0], books[1], s.embedder(), pairs,
                                     cfg.diagonal_threshold);
  s.manifest().model_ids["embedding"] = s.embedder().id();
  const auto csv = dir / "similarity.csv";
  const auto svg = dir / "similarity.svg";
  export_matrix_csv(cmp.matrix, csv);
  render_heatmap_svg(cmp.matrix, svg, {},
                     fmt::format("Codes from {} vs {} ({})", a.id, b.id, it->id));
  std::string unmatched = "# Codes without a counterpart\n\n## Template A (" + a.id + ")\n\n";
  for (const auto& u : cmp.unmatched_rows) unmatched += "- " + u + "\n";
  unmatched += "\n## Template B (" + b.id + ")\n\n";
  for (const auto& u : cmp.unmatched_cols) unmatched += "- " + u + "\n";
  const auto unmatched_path = dir / "unmatched.md";
  text::write_file_atomic(unmatched_path, unmatched);
  const auto diag_path = dir / "diagonal.md";
  text::write_file_atomic(diag_path, diagonal_markdown(cmp.diagonal));
  s.index("compare/similarity", csv);
  s.index("compare/heatmap", svg);
  s.index("compare/unmatched", unmatched_path);
  s.index("compare/diagonal", diag_path);
  stats.duration_ms = clock.ms();

  s.console().info(fmt::format("paired codes: {}", cmp.diagonal.summary()));
  s.console().info(fmt::format("unmatched: {} from A, {} from B", cmp.unmatched_rows.size(),
                               cmp.unmatched_cols.size()));
  s.save();
  s.console().info(fmt::format("run directory: {}", s.dir().string()));
  return 0;
}

int cmd_run(Session& s, const std::string& run_id) {
  const auto& cfg = s.cfg();
  const auto corpus = load_configured_corpus(cfg);
  const auto coding_tpl = load_phase_template(cfg.coding_template_ref(), Phase::kCoding, "coding");
  const auto theming_tpl =
      load_phase_template(cfg.theming_template_ref(), Phase::kTheming, "theming");
  if (s.dry_run()) {
    dry_run_coding(s, corpus, coding_tpl);
    s.console().info(fmt::format(
        "# then 1 theming request at T={} and {} sweep requests with {}; the theming "
        "prompt is built from the codebook",
        text::format_real(cfg.theming_temperature), cfg.sweep_temperatures.size(),
        cfg.chat.theming_model));
    s.console().info(cfg.reference.empty()
                         ? "# evaluation skipped: no reference file"
                         : "# then evaluation against " + cfg.reference);
    return 0;
  }
  s.chat();
  s.embedder();
  s.open_fresh(run_id);
  RunSummaryInputs summary;
  summary.transcript_count = corpus.size();

  const auto coded = code_phase(s, corpus, coding_tpl);
  summary.codebook = coded.codebook;
  summary.saturation = coded.saturation;
  summary.quote_audit = coded.quote_audit;
  summary.failures = coded.failures;

  const ThemeSet base = themes_phase(s, coded.codebook, theming_tpl);
  summary.theme_sets.push_back(base);

  std::vector<ThemeSet> prior;
  const auto& temps = cfg.sweep_temperatures;
  if (std::find(temps.begin(), temps.end(), base.temperature) == temps.end()) {
    prior.push_back(base);
  }
  auto refined = refine_phase(s, coded.codebook, theming_tpl, prior);
  for (auto& set : refined.sets) summary.theme_sets.push_back(std::move(set));
  summary.stability = refined.stability;
  summary.failures.insert(summary.failures.end(), refined.failures.begin(),
                          refined.failures.end());

  if (cfg.reference.empty()) {
    s.note("evaluation skipped: no reference file");
    s.console().info("evaluation skipped: no reference file");
  } else {
    auto ev = eval_phase(s, base);
    summary.evaluations.push_back(std::move(ev.artifact));
    summary.human_scores = std::move(ev.human);
  }
  summary.notes = s.manifest().notes;
  const auto path = write_run_summary(s.manifest(), summary, s.dir());
  s.index("summary", path);
  s.save();
  s.console().info(fmt::format("run directory: {}", s.dir().string()));
  return 0;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file (default: $THEMA_CONFIG)");
  app->add_option("--lang", f.lang, "Corpus language, e.g. it");
  app->add_option("--out", f.out, "Output root for new runs (default: runs)");
  app->add_option("--run-id", f.run_id, "Run id for a new run directory");
  app->add_flag("--dry-run", f.dry_run, "Print rendered prompts and planned requests only");
  app->add_option("--chat-provider", f.chat_provider, "openai or mock");
  app->add_option("--chat-url", f.chat_url, "Chat completions endpoint");
  app->add_option("--coding-model", f.coding_model, "Model for initial coding");
  app->add_option("--theming-model", f.theming_model, "Model for themes and refinement");
  app->add_option("--fixtures", f.fixtures, "Mock fixture directory");
  app->add_option("--embed-provider", f.embed_provider, "openai or mock");
  app->add_option("--embed-url", f.embed_url, "Embeddings endpoint");
  app->add_option("--embed-model", f.embed_model, "Embedding model");
  app->add_option("--embed-dim", f.embed_dim, "Mock embedding dimension");
  app->add_option("--parallel", f.parallel, "Maximum concurrent requests");
}

void add_corpus(CLI::App* app, Flags& f) {
  app->add_option("--corpus", f.corpus, "Directory of .txt transcripts");
  app->add_option("--coding-template", f.coding_template, "Builtin id or template file");
}

void add_theming(CLI::App* app, Flags& f) {
  app->add_option("--codebook", f.codebook, "codebook.csv from a coding run");
  app->add_option("--theming-template", f.theming_template, "Builtin id or template file");
  app->add_option("--min-themes", f.min_themes, "Minimum number of themes requested");
}

void add_eval(CLI::App* app, Flags& f) {
  app->add_option("--reference", f.reference, "Reference categories CSV (id,label,detail)");
  app->add_option("--pairs", f.pairs, "Manual pairs CSV (row_label,col_label)");
  app->add_option("--scores", f.scores, "Human scores CSV (row_label,col_label,score)");
  app->add_option("--embed-text", f.embed_text, "names or names+descriptions");
  app->add_option("--threshold", f.threshold, "Diagonal threshold (default 0.6)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thematic analysis of interview transcripts with LLMs", "thema"};
  app.require_subcommand(1);
  Flags f;

  auto* code = app.add_subcommand("code", "Initial coding of every transcript");
  add_common(code, f);
  add_corpus(code, f);

  auto* themes = app.add_subcommand("themes", "Generate themes from a codebook");
  add_common(themes, f);
  add_theming(themes, f);
  themes->add_option("--temperature", f.temperature, "Theming temperature (default 0)");

  auto* refine = app.add_subcommand("refine", "Temperature sweep and theme stability");
  add_common(refine, f);
  add_theming(refine, f);
  refine->add_option("--temps", f.temps, "Comma-separated temperatures");
  refine->add_option("--stability-threshold", f.stability_threshold,
                     "Cosine needed to match themes across runs (default 0.7)");

  auto* eval = app.add_subcommand("eval", "Compare themes with reference categories");
  add_common(eval, f);
  add_eval(eval, f);
  eval->add_option("--themes", f.themes, "themes_T*.json file");

  auto* compare = app.add_subcommand("compare-prompts",
                                     "Code one transcript with two templates and compare");
  add_common(compare, f);
  add_corpus(compare, f);
  compare->add_option("--transcript", f.transcript, "Transcript id (file stem)");
  compare->add_option("--template-a", f.template_a, "First coding template");
  compare->add_option("--template-b", f.template_b, "Second coding template (default en-coding)");
  compare->add_option("--pairs", f.compare_pairs, "Manual pairs CSV for the two code lists");
  compare->add_option("--threshold", f.threshold, "Diagonal threshold (default 0.6)");

  auto* run = app.add_subcommand("run", "Full pipeline: code, themes, refine, eval");
  add_common(run, f);
  add_corpus(run, f);
  add_theming(run, f);
  add_eval(run, f);
  run->add_option("--temperature", f.temperature, "Theming temperature (default 0)");
  run->add_option("--temps", f.temps, "Comma-separated sweep temperatures");
  run->add_option("--stability-threshold", f.stability_threshold,
                  "Cosine needed to match themes across runs (default 0.7)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream e2;
    const int rc = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  Console console(out, err);
  try {
    Session s(resolve_config(f), console, f.dry_run);
    if (*code) return cmd_code(s, f.run_id);
    if (*themes) return cmd_themes(s, f);
    if (*refine) return cmd_refine(s, f);
    if (*eval) return cmd_eval(s, f);
    if (*compare) return cmd_compare_prompts(s, f);
    if (*run) return cmd_run(s, f.run_id);
  } catch (const Error& e) {
    console.error(e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    console.error(e.what());
    return static_cast<int>(ExitCode::kUsage);
  } catch (const std::exception& e) {
    console.error(e.what());
    return static_cast<int>(ExitCode::kProvider);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace thema
