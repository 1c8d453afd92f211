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
#include <cmath>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "thema/evaluation.hpp"
#include "thema/response_json.hpp"
#include "thema/text.hpp"

namespace thema {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kThemeContainers = {
    "Temi", "temi", "themes", "Themes", "tema", "theme"};
const std::vector<std::string> kThemeNameKeys = {"nome", "name", "tema",
                                                 "theme", "titolo", "title"};
const std::vector<std::string> kThemeDescriptionKeys = {
    "descrizione", "description", "descrizione_densa"};
const std::vector<std::string> kThemeIndexKeys = {
    "categorie", "codes", "indici", "indices", "codici", "code_indices",
    "categorie_iniziali", "indice", "categories", "codici_iniziali"};

// Labels that introduce an index list in free-text responses.
constexpr std::string_view kIndexLinePrefixes[] = {
    "categorie", "codici", "codes", "indici", "indices", "categories",
    "elenco delle categorie", "initial codes", "indice", "index"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<std::string> keys_with(const std::string& primary,
                                   const std::vector<std::string>& aliases) {
  std::vector<std::string> out;
  if (!primary.empty()) out.push_back(primary);
  out.insert(out.end(), aliases.begin(), aliases.end());
  return out;
}

std::string_view strip_markdown(std::string_view line) {
  line = text::trim(line);
  while (!line.empty() && (line.front() == '#' || line.front() == '*' ||
                           line.front() == '>' || line.front() == '_' ||
                           (line.front() == '-' && line.size() > 1 &&
                            line[1] == ' '))) {
    line.remove_prefix(1);
    line = text::trim(line);
  }
  while (!line.empty() && (line.back() == '*' || line.back() == '_')) {
    line.remove_suffix(1);
  }
  return text::trim(line);
}

// Parses "Tema 3: Name" / "Theme 3 - Name". Returns the remainder (possibly
// empty) when the line is a header.
std::optional<std::string> header_name(std::string_view line) {
  line = strip_markdown(line);
  std::size_t word = 0;
  if (text::starts_with_icase(line, "tema ")) {
    word = 5;
  } else if (text::starts_with_icase(line, "theme ")) {
    word = 6;
  } else {
    return std::nullopt;
  }
  std::size_t i = word;
  while (i < line.size() && line[i] == ' ') ++i;
  const std::size_t digits = i;
  while (i < line.size() && is_digit(line[i])) ++i;
  if (i == digits) return std::nullopt;
  std::string_view rest = text::trim(line.substr(i));
  if (rest.starts_with("\xE2\x80\x93")) {  // en dash
    rest.remove_prefix(3);
  } else if (!rest.empty() && (rest.front() == ':' || rest.front() == '.' ||
                               rest.front() == '-' || rest.front() == ')')) {
    rest.remove_prefix(1);
  } else if (!rest.empty()) {
    return std::nullopt;
  }
  return clean_theme_name(rest);
}

std::vector<long long> extract_numbers(std::string_view s) {
  std::vector<long long> out;
  std::size_t i = 0;
  const auto read_number = [&](std::size_t& k) -> std::optional<long long> {
    if (k >= s.size() || !is_digit(s[k])) return std::nullopt;
    long long v = 0;
    while (k < s.size() && is_digit(s[k])) {
      v = v * 10 + (s[k] - '0');
      if (v > 1'000'000'000LL) v = 1'000'000'000LL;
      ++k;
    }
    return v;
  };
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    const long long a = *read_number(i);
    std::size_t k = i;
    while (k < s.size() && s[k] == ' ') ++k;
    std::size_t dash = 0;
    if (k < s.size() && s[k] == '-') {
      dash = 1;
    } else if (s.substr(k).starts_with("\xE2\x80\x93")) {
      dash = 3;
    }
    if (dash > 0) {
      std::size_t m = k + dash;
      while (m < s.size() && s[m] == ' ') ++m;
      if (const auto b = read_number(m); b && *b >= a && *b - a < 1000) {
        for (long long v = a; v <= *b; ++v) out.push_back(v);
        i = m;
        continue;
      }
    }
    out.push_back(a);
  }
  return out;
}

std::vector<std::size_t> to_indices(const std::vector<long long>& values) {
  std::vector<std::size_t> out;
  out.reserve(values.size());
  for (const long long v : values) out.push_back(static_cast<std::size_t>(v));
  return out;
}

std::vector<std::size_t> json_indices(const json* value, Diagnostics* diag,
                                      const std::string& theme) {
  std::vector<long long> raw;
  if (value == nullptr) return {};
  const auto take = [&](const json& item) {
    if (item.is_number_integer()) {
      const auto v = item.get<long long>();
      if (v >= 0) {
        raw.push_back(v);
      } else if (diag != nullptr) {
        diag->warn(fmt::format("theme '{}': negative index {} dropped", theme, v));
      }
    } else if (item.is_number()) {
      const double d = item.get<double>();
      if (d >= 0 && std::floor(d) == d) raw.push_back(static_cast<long long>(d));
    } else if (item.is_string()) {
      const auto nums = extract_numbers(item.get<std::string>());
      raw.insert(raw.end(), nums.begin(), nums.end());
    }
  };
  if (value->is_array()) {
    for (const auto& item : *value) take(item);
  } else {
    take(*value);
  }
  return to_indices(raw);
}

std::string json_text(const json* value) {
  if (value == nullptr || !value->is_string()) return {};
  return std::string(text::trim(value->get<std::string>()));
}

std::optional<std::vector<Theme>> themes_from_json(const json& doc,
                                                   const OutputKeyMap* keys,
                                                   Diagnostics* diag) {
  const json* list = nullptr;
  if (doc.is_array()) {
    list = &doc;
  } else {
    list = find_member(
        doc, keys_with(keys ? keys->container : std::string{}, kThemeContainers));
  }
  if (list == nullptr || !list->is_array()) return std::nullopt;

  const auto name_keys =
      keys_with(keys ? keys->name : std::string{}, kThemeNameKeys);
  const auto desc_keys =
      keys_with(keys ? keys->description : std::string{}, kThemeDescriptionKeys);
  const auto index_keys =
      keys_with(keys ? keys->indices : std::string{}, kThemeIndexKeys);

  std::vector<Theme> out;
  for (const auto& entry : *list) {
    if (!entry.is_object()) continue;
    Theme theme;
    theme.name = clean_theme_name(json_text(find_member(entry, name_keys)));
    theme.description = json_text(find_member(entry, desc_keys));
    if (theme.name.empty()) {
      if (diag != nullptr) diag->warn("skipped a theme without a name");
      continue;
    }
    theme.code_indices =
        json_indices(find_member(entry, index_keys), diag, theme.name);
    out.push_back(std::move(theme));
  }
  if (out.empty()) return std::nullopt;
  return out;
}

bool is_index_line(std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return false;
  for (const auto prefix : kIndexLinePrefixes) {
    if (text::starts_with_icase(line, prefix)) return true;
  }
  return false;
}

std::vector<Theme> themes_from_lines(std::string_view raw) {
  std::vector<Theme> out;
  std::vector<std::string> description;
  bool awaiting_name = false;
  bool indices_seen = false;

  const auto finish = [&] {
    if (out.empty()) return;
    if (out.back().description.empty()) {
      out.back().description =
          fmt::format("{}", fmt::join(description, " "));
    }
    description.clear();
  };

  for (const auto& raw_line : text::split(raw, '\n')) {
    const std::string_view line = strip_markdown(raw_line);
    if (auto name = header_name(raw_line)) {
      finish();
      out.push_back(Theme{*name, {}, {}});
      awaiting_name = name->empty();
      indices_seen = false;
      continue;
    }
    if (out.empty() || line.empty()) continue;
    if (awaiting_name) {
      out.back().name = clean_theme_name(line);
      awaiting_name = false;
      continue;
    }
    if (is_index_line(line)) {
      const auto nums =
          to_indices(extract_numbers(line.substr(line.find(':') + 1)));
      auto& indices = out.back().code_indices;
      indices.insert(indices.end(), nums.begin(), nums.end());
      indices_seen = true;
      continue;
    }
    if (indices_seen) continue;  // trailing prose after the index list
    std::string_view body = line;
    for (const std::string_view label : {"descrizione:", "description:"}) {
      if (text::starts_with_icase(body, label)) {
        body = text::trim(body.substr(label.size()));
      }
    }
    if (!body.empty()) description.emplace_back(body);
  }
  finish();
  std::erase_if(out, [](const Theme& t) { return t.name.empty(); });
  return out;
}

}  // namespace

std::string clean_theme_name(std::string_view name) {
  std::string_view s = strip_markdown(name);
  const auto strip_quotes = [](std::string_view v) {
    v = text::trim(v);
    while (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') &&
           v.back() == v.front()) {
      v = text::trim(v.substr(1, v.size() - 2));
    }
    return v;
  };
  s = strip_quotes(s);
  if (text::starts_with_icase(s, "tema ") || text::starts_with_icase(s, "theme ")) {
    const auto numbered = header_name(s);
    if (numbered && !numbered->empty()) return *numbered;
  }
  return std::string(strip_quotes(strip_markdown(s)));
}

std::vector<Theme> parse_theme_response(std::string_view raw,
                                        const OutputKeyMap* keys,
                                        Diagnostics* diag) {
  if (text::is_blank(raw)) {
    throw ResponseParseError("empty theme response", std::string(raw));
  }
  if (const auto extracted = extract_json(raw)) {
    if (auto themes = themes_from_json(extracted->value, keys, diag)) {
      return *std::move(themes);
    }
  }
  auto themes = themes_from_lines(raw);
  if (themes.empty()) {
    throw ResponseParseError("no recognizable theme in response",
                             std::string(raw));
  }
  return themes;
}

std::string render_theming_prompt(const Codebook& cb, const PromptTemplate& tpl,
                                  std::size_t min_themes) {
  if (tpl.phase != Phase::kTheming) {
    throw UsageError(fmt::format("template {} is not a theming template", tpl.id));
  }
  if (cb.codes.empty()) throw UsageError("cannot theme an empty codebook");
  return render(tpl, {{std::string(kCodesListVar), format_code_list(cb.codes)},
                      {std::string(kMinThemesVar), std::to_string(min_themes)}});
}

ThemeRun generate_themes(const Codebook& cb, const PromptTemplate& tpl,
                         ChatProvider& provider, const ThemingOptions& options) {
  if (options.min_themes < 1) throw UsageError("min_themes must be >= 1");
  ThemeRun out;
  out.prompt = render_theming_prompt(cb, tpl, options.min_themes);

  ChatRequest request;
  request.model = options.model;
  request.prompt = out.prompt;
  request.temperature = options.temperature;
  request.max_output_tokens = options.max_output_tokens;
  request.seed_tag = fmt::format("{}/themes/T{}", options.run_id,
                                 text::format_real(options.temperature));
  out.response = provider.chat(request);
  out.raw_response = out.response.text;

  Diagnostics diag;
  if (out.response.truncated) diag.warn("theme response was truncated");
  auto parsed = parse_theme_response(out.raw_response, &tpl.keys, &diag);

  ThemeSet& set = out.set;
  set.run_id = options.run_id;
  set.temperature = options.temperature;
  set.min_themes = options.min_themes;
  for (auto& theme : parsed) {
    std::vector<std::size_t> kept;
    std::set<std::size_t> seen;
    for (const std::size_t index : theme.code_indices) {
      if (index >= cb.codes.size()) {
        diag.warn(fmt::format("theme '{}': index {} out of range [0, {}) dropped",
                              theme.name, index, cb.codes.size()));
      } else if (!seen.insert(index).second) {
        diag.warn(fmt::format("theme '{}': duplicate index {} dropped",
                              theme.name, index));
      } else {
        kept.push_back(index);
      }
    }
    if (kept.empty()) {
      diag.warn(fmt::format("theme '{}' dropped: no valid code index",
                            theme.name));
      continue;
    }
    theme.code_indices = std::move(kept);
    set.themes.push_back(std::move(theme));
  }
  if (set.themes.empty()) {
    throw ResponseParseError("no valid theme after index validation",
                             out.raw_response);
  }
  if (set.themes.size() < options.min_themes) {
    diag.warn(fmt::format("below minimum: {} themes, {} requested",
                          set.themes.size(), options.min_themes));
  }
  set.warnings = std::move(diag.warnings);
  return out;
}

std::vector<SweepOutcome> sweep_temperatures(const Codebook& cb,
                                             const PromptTemplate& tpl,
                                             ChatProvider& provider,
                                             const std::vector<double>& temps,
                                             const ThemingOptions& options) {
  if (temps.empty()) throw UsageError("temperature sweep needs at least one T");
  for (const double t : temps) {
    if (!(t >= 0.0 && t <= 2.0)) {
      throw UsageError(fmt::format("sweep temperature {} outside [0, 2]", t));
    }
  }
  std::vector<SweepOutcome> out(temps.size());
  parallel_for(temps.size(), options.max_parallel, [&](std::size_t i) {
    out[i].temperature = temps[i];
    ThemingOptions opts = options;
    opts.temperature = temps[i];
    try {
      out[i].run = generate_themes(cb, tpl, provider, opts);
    } catch (const ResponseParseError& e) {
      out[i].error = e.what();
      out[i].raw_response = e.raw();
      out[i].code = e.code();
    } catch (const Error& e) {
      out[i].error = e.what();
      out[i].code = e.code();
    } catch (const std::exception& e) {
      out[i].error = e.what();
      out[i].code = ExitCode::kProvider;
    }
  });
  return out;
}

std::string theme_embedding_text(const Theme& theme) {
  if (text::is_blank(theme.description)) return theme.name;
  return theme.name + ": " + theme.description;
}

StabilityReport stability(const std::vector<ThemeSet>& sets,
                          EmbeddingProvider& embedder, double threshold) {
  if (sets.size() < 2) throw UsageError("stability needs at least two theme sets");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw UsageError(fmt::format("stability threshold {} outside (0, 1]", threshold));
  }
  // Scores are compared with a little slack so identical texts still match
  // at threshold 1.0 despite rounding in the norm.
  constexpr double kSlack = 1e-9;

  std::vector<std::size_t> order(sets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sets[a].temperature < sets[b].temperature;
  });

  StabilityReport report;
  report.match_threshold = threshold;
  report.embedder_id = embedder.id();

  std::vector<std::string> texts;
  std::vector<std::vector<std::size_t>> text_index(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ThemeSet& set = sets[order[r]];
    report.runs.push_back({set.run_id, set.temperature});
    for (const auto& theme : set.themes) {
      text_index[r].push_back(texts.size());
      texts.push_back(theme_embedding_text(theme));
    }
  }
  std::vector<EmbeddingVector> vectors;
  if (!texts.empty()) vectors = embedder.embed(texts);
  const auto vec = [&](const StabilityMember& m) -> const EmbeddingVector& {
    return vectors[text_index[m.run][m.theme]];
  };

  std::vector<std::vector<StabilityMember>> clusters;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ThemeSet& set = sets[order[r]];
    struct Candidate {
      double score;
      std::size_t theme;
      std::size_t cluster;
    };
    std::vector<Candidate> candidates;
    for (std::size_t t = 0; t < set.themes.size(); ++t) {
      const StabilityMember me{r, t, set.themes[t].name};
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        double best = -2.0;
        for (const auto& member : clusters[c]) {
          best = std::max(best, cosine(vec(me), vec(member)));
        }
        if (best >= threshold - kSlack) candidates.push_back({best, t, c});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                return std::tie(b.score, a.theme, a.cluster) <
                       std::tie(a.score, b.theme, b.cluster);
              });
    std::vector<bool> theme_used(set.themes.size(), false);
    std::vector<bool> cluster_used(clusters.size(), false);
    for (const auto& cand : candidates) {
      if (theme_used[cand.theme] || cluster_used[cand.cluster]) continue;
      theme_used[cand.theme] = true;
      cluster_used[cand.cluster] = true;
      clusters[cand.cluster].push_back({r, cand.theme, set.themes[cand.theme].name});
    }
    for (std::size_t t = 0; t < set.themes.size(); ++t) {
      if (!theme_used[t]) clusters.push_back({{r, t, set.themes[t].name}});
    }
  }

  for (auto& members : clusters) {
    if (members.size() == 1) {
      report.singletons.push_back(members.front());
      continue;
    }
    std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
      return std::tie(a.run, a.theme) < std::tie(b.run, b.theme);
    });
    StabilityCluster cluster;
    cluster.name = members.front().name;
    cluster.members = members;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        cluster.scores.push_back({a, b, cosine(vec(members[a]), vec(members[b]))});
      }
    }
    report.clusters.push_back(std::move(cluster));
  }
  return report;
}

json to_json(const ThemeSet& set) {
  json themes = json::array();
  for (const auto& t : set.themes) {
    themes.push_back({{"name", t.name},
                      {"description", t.description},
                      {"code_indices", t.code_indices}});
  }
  json doc;
  doc["run_id"] = set.run_id;
  doc["temperature"] = set.temperature;
  doc["min_themes"] = set.min_themes;
  doc["themes"] = std::move(themes);
  doc["raw_response_path"] = set.raw_response_path;
  doc["warnings"] = set.warnings;
  return doc;
}

ThemeSet theme_set_from_json(const json& doc) {
  ThemeSet set;
  try {
    set.run_id = doc.at("run_id").get<std::string>();
    set.temperature = doc.at("temperature").get<double>();
    set.min_themes = doc.at("min_themes").get<std::size_t>();
    set.raw_response_path = doc.value("raw_response_path", std::string{});
    set.warnings = doc.value("warnings", std::vector<std::string>{});
    for (const auto& t : doc.at("themes")) {
      set.themes.push_back(
          Theme{t.at("name").get<std::string>(),
                t.value("description", std::string{}),
                t.at("code_indices").get<std::vector<std::size_t>>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("theme set: {}", e.what()));
  }
  return set;
}

json to_json(const StabilityReport& report) {
  const auto member_json = [&](const StabilityMember& m) {
    return json{{"run_id", report.runs[m.run].run_id},
                {"temperature", report.runs[m.run].temperature},
                {"theme_index", m.theme},
                {"name", m.name}};
  };
  json runs = json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"run_id", r.run_id}, {"temperature", r.temperature}});
  }
  json clusters = json::array();
  for (const auto& c : report.clusters) {
    json members = json::array();
    for (const auto& m : c.members) members.push_back(member_json(m));
    json scores = json::array();
    for (const auto& s : c.scores) {
      scores.push_back({{"a", s.a}, {"b", s.b}, {"score", s.score}});
    }
    clusters.push_back(
        {{"name", c.name}, {"members", members}, {"pairwise_scores", scores}});
  }
  json singletons = json::array();
  for (const auto& m : report.singletons) singletons.push_back(member_json(m));
  json doc;
  doc["match_threshold"] = report.match_threshold;
  doc["embedder_id"] = report.embedder_id;
  doc["runs"] = std::move(runs);
  doc["clusters"] = std::move(clusters);
  doc["singletons"] = std::move(singletons);
  return doc;
}

void save_theme_set(const ThemeSet& set, const std::filesystem::path& path) {
  text::write_file_atomic(path, to_json(set).dump(2) + "\n");
}

ThemeSet load_theme_set(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  try {
    return theme_set_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string theme_set_filename(double temperature) {
  return fmt::format("themes_T{}.json", text::format_real(temperature));
}

}  // namespace thema
