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

#include "thema/config.hpp"

#include <charconv>

#include <fmt/format.h>

#include "thema/error.hpp"
#include "thema/prompting.hpp"
#include "thema/text.hpp"

namespace thema {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string resolve_path(const std::string& value, const fs::path& base) {
  if (value.empty()) return value;
  const fs::path p(value);
  if (p.is_absolute() || base.empty()) return value;
  return (base / p).lexically_normal().string();
}

// Template refs may be builtin ids; only treat them as paths otherwise.
std::string resolve_template_ref(const std::string& value, const fs::path& base) {
  for (const auto& t : builtin_templates()) {
    if (t.id == value) return value;
  }
  return resolve_path(value, base);
}

void check_keys(const json& obj, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw UsageError(fmt::format("config: '{}' must be an object", where));
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const auto a : allowed) known = known || key == a;
    if (!known) {
      throw UsageError(fmt::format("config: unknown key '{}' in {}", key, where));
    }
  }
}

template <typename T>
void take(const json& obj, const char* key, T& into, std::string_view where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(fmt::format("config: bad value for {}.{}", where, key));
  }
}

void check_temperature(double t, std::string_view what) {
  if (!(t >= 0.0 && t <= 2.0)) {
    throw UsageError(fmt::format("{} must be in [0, 2], got {}", what,
                                 text::format_real(t)));
  }
}

void check_threshold(double t, std::string_view what) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw UsageError(fmt::format("{} must be in (0, 1], got {}", what,
                                 text::format_real(t)));
  }
}

}  // namespace

std::string RunConfig::coding_template_ref() const {
  return coding_template.empty() ? language + "-coding" : coding_template;
}

std::string RunConfig::theming_template_ref() const {
  return theming_template.empty() ? language + "-theming" : theming_template;
}

void validate(const RunConfig& c) {
  if (c.language.empty()) throw UsageError("language must not be empty");
  check_temperature(c.coding_temperature, "coding temperature");
  check_temperature(c.theming_temperature, "theming temperature");
  for (const double t : c.sweep_temperatures) check_temperature(t, "sweep temperature");
  check_threshold(c.stability_threshold, "stability threshold");
  check_threshold(c.diagonal_threshold, "diagonal threshold");
  if (c.min_themes < 1) throw UsageError("min_themes must be at least 1");
  if (c.parallelism < 1) throw UsageError("parallelism must be at least 1");
  if (c.chat.provider != "openai" && c.chat.provider != "mock") {
    throw UsageError(fmt::format("unknown chat provider '{}'", c.chat.provider));
  }
  if (c.embedding.provider != "openai" && c.embedding.provider != "mock") {
    throw UsageError(
        fmt::format("unknown embedding provider '{}'", c.embedding.provider));
  }
  if (c.embedding.dimension < 8) throw UsageError("embedding dimension must be >= 8");
  if (c.chat.requests_per_minute <= 0 || c.embedding.requests_per_minute <= 0) {
    throw UsageError("requests_per_minute must be positive");
  }
  if (c.embed_text != "names" && c.embed_text != "names+descriptions") {
    throw UsageError(fmt::format(
        "embed text must be 'names' or 'names+descriptions', got '{}'", c.embed_text));
  }
}

void apply_config_json(RunConfig& c, const json& doc, const fs::path& base) {
  check_keys(doc, "config",
             {"corpus", "language", "output_root", "chat", "embedding", "coding",
              "theming", "refine", "eval", "parallelism"});
  take(doc, "corpus", c.corpus_dir, "config");
  c.corpus_dir = resolve_path(c.corpus_dir, base);
  take(doc, "language", c.language, "config");
  take(doc, "output_root", c.output_root, "config");
  c.output_root = resolve_path(c.output_root, base);
  take(doc, "parallelism", c.parallelism, "config");

  if (doc.contains("chat")) {
    const auto& o = doc["chat"];
    check_keys(o, "chat",
               {"provider", "url", "coding_model", "theming_model", "fixtures",
                "requests_per_minute", "timeout_s", "max_output_tokens"});
    take(o, "provider", c.chat.provider, "chat");
    take(o, "url", c.chat.url, "chat");
    take(o, "coding_model", c.chat.coding_model, "chat");
    take(o, "theming_model", c.chat.theming_model, "chat");
    take(o, "fixtures", c.chat.fixtures, "chat");
    c.chat.fixtures = resolve_path(c.chat.fixtures, base);
    take(o, "requests_per_minute", c.chat.requests_per_minute, "chat");
    take(o, "timeout_s", c.chat.timeout_s, "chat");
    take(o, "max_output_tokens", c.chat.max_output_tokens, "chat");
  }
  if (doc.contains("embedding")) {
    const auto& o = doc["embedding"];
    check_keys(o, "embedding",
               {"provider", "url", "model", "dimension", "requests_per_minute",
                "timeout_s"});
    take(o, "provider", c.embedding.provider, "embedding");
    take(o, "url", c.embedding.url, "embedding");
    take(o, "model", c.embedding.model, "embedding");
    take(o, "dimension", c.embedding.dimension, "embedding");
    take(o, "requests_per_minute", c.embedding.requests_per_minute, "embedding");
    take(o, "timeout_s", c.embedding.timeout_s, "embedding");
  }
  if (doc.contains("coding")) {
    const auto& o = doc["coding"];
    check_keys(o, "coding", {"temperature", "template"});
    take(o, "temperature", c.coding_temperature, "coding");
    take(o, "template", c.coding_template, "coding");
    c.coding_template = resolve_template_ref(c.coding_template, base);
  }
  if (doc.contains("theming")) {
    const auto& o = doc["theming"];
    check_keys(o, "theming", {"temperature", "template", "min_themes"});
    take(o, "temperature", c.theming_temperature, "theming");
    take(o, "template", c.theming_template, "theming");
    c.theming_template = resolve_template_ref(c.theming_template, base);
    take(o, "min_themes", c.min_themes, "theming");
  }
  if (doc.contains("refine")) {
    const auto& o = doc["refine"];
    check_keys(o, "refine", {"temperatures", "stability_threshold"});
    take(o, "temperatures", c.sweep_temperatures, "refine");
    take(o, "stability_threshold", c.stability_threshold, "refine");
  }
  if (doc.contains("eval")) {
    const auto& o = doc["eval"];
    check_keys(o, "eval",
               {"diagonal_threshold", "embed_text", "reference", "pairs", "scores"});
    take(o, "diagonal_threshold", c.diagonal_threshold, "eval");
    take(o, "embed_text", c.embed_text, "eval");
    take(o, "reference", c.reference, "eval");
    take(o, "pairs", c.pairs, "eval");
    take(o, "scores", c.scores, "eval");
    c.reference = resolve_path(c.reference, base);
    c.pairs = resolve_path(c.pairs, base);
    c.scores = resolve_path(c.scores, base);
  }
}

void apply_config_file(RunConfig& config, const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw UsageError(fmt::format("config file not found: {}", path.string()));
  }
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("{}: {}", path.string(), e.what()));
  }
  apply_config_json(config, doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  return {
      {"corpus", c.corpus_dir},
      {"language", c.language},
      {"output_root", c.output_root},
      {"parallelism", c.parallelism},
      {"chat",
       {{"provider", c.chat.provider},
        {"url", c.chat.url},
        {"coding_model", c.chat.coding_model},
        {"theming_model", c.chat.theming_model},
        {"fixtures", c.chat.fixtures},
        {"requests_per_minute", c.chat.requests_per_minute},
        {"timeout_s", c.chat.timeout_s},
        {"max_output_tokens", c.chat.max_output_tokens}}},
      {"embedding",
       {{"provider", c.embedding.provider},
        {"url", c.embedding.url},
        {"model", c.embedding.model},
        {"dimension", c.embedding.dimension},
        {"requests_per_minute", c.embedding.requests_per_minute},
        {"timeout_s", c.embedding.timeout_s}}},
      {"coding",
       {{"temperature", c.coding_temperature},
        {"template", c.coding_template_ref()}}},
      {"theming",
       {{"temperature", c.theming_temperature},
        {"template", c.theming_template_ref()},
        {"min_themes", c.min_themes}}},
      {"refine",
       {{"temperatures", c.sweep_temperatures},
        {"stability_threshold", c.stability_threshold}}},
      {"eval",
       {{"diagonal_threshold", c.diagonal_threshold},
        {"embed_text", c.embed_text},
        {"reference", c.reference},
        {"pairs", c.pairs},
        {"scores", c.scores}}},
  };
}

std::vector<double> parse_temperature_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : text::split(s, ',')) {
    const auto t = text::trim(part);
    if (t.empty()) continue;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
      throw UsageError(fmt::format("bad temperature '{}'", t));
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("temperature list is empty");
  return out;
}

}  // namespace thema
