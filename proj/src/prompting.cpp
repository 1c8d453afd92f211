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

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "thema/text.hpp"

namespace thema {
namespace {

constexpr std::string_view kItalianCoding =
    R"(Puoi assistermi nella generazione di una vasta gamma di categorie iniziali (genera tutte le categorie che ritieni indispensabili per catturare a pieno il significato esplicito o latente, o gli eventi nel testo, concentrati sull'intervistato e non sull'intervistatore che fa le domande), L'obiettivo e' quello di raccogliere un ampio spettro di argomenti, azioni e idee presenti nel testo qui sotto, per aiutarmi nella conduzione di un'analisi tematica.

Fornisci un nome per ciascuna categoria, con una descrizione densa di massimo 25 parole e una citazione dell'intervistato per ogni categoria di massimo 100 parole.

Formatta la risposta come un file json mantenendo nomi, descrizioni e citazioni insieme nell'oggetto 'Categorie'.

```{testo}```)";

// The closing paragraph asks for JSON; the line-oriented fallback parser
// covers responses that ignore it.
constexpr std::string_view kItalianTheming =
    R"(Leggi prima l'elenco delle categorie iniziali della mia Analisi Tematica: {codes_list}.
Le categorie iniziali sono nel seguente formato:
[indice]: nome_codice. descrizione_codice. citazione

Determina tutti i possibili temi (almeno {min_themes}) ordinando, confrontando e raggruppando le categorie iniziali.

Fornisci un numero adeguato di temi insieme a un nome, una descrizione densa (120 parole) e l'elenco delle categorie (indice) per ciascun tema. Assicurati che i temi catturino la ricchezza e la diversità dei codici iniziali.

Formatta la risposta come un file json con l'oggetto 'Temi': una lista di temi, ciascuno con 'nome', 'descrizione' e 'categorie' (la lista degli indici delle categorie iniziali).)";

constexpr std::string_view kEnglishCoding =
    R"(Can you assist me in generating a broad range of initial codes (generate all the codes you consider necessary to fully capture the explicit or latent meaning, or the events in the text; focus on the interviewee and not on the interviewer asking the questions). The aim is to collect a wide spectrum of topics, actions and ideas present in the text below, to help me conduct a thematic analysis.

Provide a name for each code, with a dense description of at most 25 words and a quote from the interviewee for each code of at most 100 words. Write the names, descriptions and quotes in the original language of the interview data.

Format the response as a json file keeping names, descriptions and quotes together in the 'Codes' object, each entry with the keys 'name', 'description' and 'quote'.

```{testo}```)";

constexpr std::string_view kEnglishTheming =
    R"(First read the list of initial codes of my Thematic Analysis: {codes_list}.
The initial codes are in the following format:
[index]: code_name. code_description. quote

Determine all the possible themes (at least {min_themes}) by sorting, comparing and grouping the initial codes.

Provide an adequate number of themes together with a name, a dense description (120 words) and the list of codes (index) for each theme. Make sure the themes capture the richness and diversity of the initial codes.

Format the response as a json file with the 'Themes' object: a list of themes, each with 'name', 'description' and 'codes' (the list of indices of the initial codes).)";

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

// Visits `{ident}` spans: on_text(literal) and on_var(name).
template <typename OnText, typename OnVar>
void scan(std::string_view body, OnText on_text, OnVar on_var) {
  std::size_t literal_start = 0;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && is_ident_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && is_ident(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        on_text(body.substr(literal_start, i - literal_start));
        on_var(body.substr(i + 1, j - i - 1));
        i = j + 1;
        literal_start = i;
        continue;
      }
    }
    ++i;
  }
  on_text(body.substr(literal_start));
}

std::vector<PromptTemplate> make_builtins() {
  const OutputKeyMap it_coding{.container = "Categorie",
                               .name = "nome",
                               .description = "descrizione",
                               .quote = "citazione",
                               .indices = {}};
  const OutputKeyMap it_theming{.container = "Temi",
                                .name = "nome",
                                .description = "descrizione",
                                .quote = {},
                                .indices = "categorie"};
  const OutputKeyMap en_coding{.container = "Codes",
                               .name = "name",
                               .description = "description",
                               .quote = "quote",
                               .indices = {}};
  const OutputKeyMap en_theming{.container = "Themes",
                                .name = "name",
                                .description = "description",
                                .quote = {},
                                .indices = "codes"};
  return {
      {"it-coding", Phase::kCoding, "it", std::string(kItalianCoding),
       it_coding},
      {"it-theming", Phase::kTheming, "it", std::string(kItalianTheming),
       it_theming},
      {"en-coding", Phase::kCoding, "en", std::string(kEnglishCoding),
       en_coding},
      {"en-theming", Phase::kTheming, "en", std::string(kEnglishTheming),
       en_theming},
  };
}

std::string canonical_for(const OutputKeyMap& keys, const std::string& key) {
  if (keys.container == key) return "container";
  if (keys.name == key) return "name";
  if (keys.description == key) return "description";
  if (keys.quote == key) return "quote";
  return "indices";
}

}  // namespace

std::string_view to_string(Phase phase) {
  return phase == Phase::kCoding ? "coding" : "theming";
}

Phase parse_phase(std::string_view s) {
  if (s == "coding") return Phase::kCoding;
  if (s == "theming") return Phase::kTheming;
  throw UsageError(fmt::format("unknown phase '{}'", s));
}

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates = make_builtins();
  return templates;
}

const PromptTemplate& builtin_template(std::string_view id) {
  for (const auto& tpl : builtin_templates()) {
    if (tpl.id == id) return tpl;
  }
  std::vector<std::string> ids;
  for (const auto& tpl : builtin_templates()) ids.push_back(tpl.id);
  throw UsageError(fmt::format("unknown builtin template '{}' (known: {})", id,
                               fmt::join(ids, ", ")));
}

std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> out;
  scan(
      body, [](std::string_view) {},
      [&](std::string_view name) { out.emplace_back(name); });
  return out;
}

void validate(const PromptTemplate& tpl) {
  const auto vars = placeholders(tpl.body);
  const auto count = [&](std::string_view name) {
    return std::count(vars.begin(), vars.end(), name);
  };
  const std::string who = tpl.id.empty() ? "template" : tpl.id;
  const auto require_key = [&](const std::string& value, const char* field) {
    if (value.empty()) {
      throw UsageError(
          fmt::format("{}: key map is missing '{}'", who, field));
    }
  };
  require_key(tpl.keys.container, "container");
  require_key(tpl.keys.name, "name");
  require_key(tpl.keys.description, "description");
  if (tpl.phase == Phase::kCoding) {
    if (count(kTextVar) != 1) {
      throw UsageError(fmt::format(
          "{}: coding templates need exactly one {{testo}} placeholder",
          who));
    }
    require_key(tpl.keys.quote, "quote");
  } else {
    if (count(kCodesListVar) < 1 || count(kMinThemesVar) < 1) {
      throw UsageError(fmt::format(
          "{}: theming templates need {{codes_list}} and {{min_themes}}",
          who));
    }
    require_key(tpl.keys.indices, "indices");
  }
}

std::string render(const PromptTemplate& tpl,
                   const std::map<std::string, std::string>& bindings,
                   Diagnostics* diag) {
  std::string out;
  out.reserve(tpl.body.size());
  std::set<std::string, std::less<>> used;
  scan(
      tpl.body, [&](std::string_view literal) { out += literal; },
      [&](std::string_view name) {
        const auto it = bindings.find(std::string(name));
        if (it == bindings.end()) {
          throw UsageError(fmt::format("missing binding for placeholder {{{}}}",
                                       name));
        }
        used.insert(it->first);
        out += it->second;
      });
  if (diag != nullptr) {
    for (const auto& [name, value] : bindings) {
      if (!used.contains(name)) {
        diag->warn(fmt::format("binding '{}' is not used by template {}",
                               name, tpl.id));
      }
    }
  }
  return out;
}

std::string format_code_list(const std::vector<InitialCode>& codes) {
  if (codes.empty()) throw UsageError("cannot format an empty code list");
  std::string out;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto& c = codes[i];
    if (c.index != i) {
      throw UsageError(fmt::format(
          "code indices must be contiguous from 0 (position {} has {})", i,
          c.index));
    }
    if (i > 0) out += ", ";
    out += fmt::format("[{}]: {}. {}. {}", c.index, c.name, c.description,
                       c.quote);
  }
  return out;
}

PromptTemplate parse_template(std::string_view content, std::string id) {
  PromptTemplate tpl;
  tpl.id = std::move(id);
  bool have_phase = false;
  bool have_separator = false;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    std::string_view line = content.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (text::trim(line) == "---") {
      have_separator = true;
      break;
    }
    if (text::is_blank(line)) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw UsageError(
          fmt::format("{}: malformed front-matter line '{}'", tpl.id, line));
    }
    const auto key = text::trim(line.substr(0, colon));
    const auto value = text::trim(line.substr(colon + 1));
    if (key == "phase") {
      tpl.phase = parse_phase(value);
      have_phase = true;
    } else if (key == "language") {
      tpl.language = std::string(value);
    } else if (key == "id") {
      tpl.id = std::string(value);
    } else if (key == "keys") {
      for (const auto& entry : text::split(value, ',')) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
          throw UsageError(fmt::format("{}: bad key mapping '{}'", tpl.id,
                                       text::trim(entry)));
        }
        const std::string from(text::trim(std::string_view(entry).substr(0, eq)));
        const std::string to(text::trim(std::string_view(entry).substr(eq + 1)));
        if (to == "container" || to == "codes" || to == "themes") {
          tpl.keys.container = from;
        } else if (to == "name") {
          tpl.keys.name = from;
        } else if (to == "description") {
          tpl.keys.description = from;
        } else if (to == "quote") {
          tpl.keys.quote = from;
        } else if (to == "indices") {
          tpl.keys.indices = from;
        } else {
          throw UsageError(
              fmt::format("{}: unknown canonical field '{}'", tpl.id, to));
        }
      }
    } else {
      throw UsageError(
          fmt::format("{}: unknown front-matter key '{}'", tpl.id, key));
    }
  }
  if (!have_separator) {
    throw UsageError(fmt::format("{}: missing '---' after front-matter",
                                 tpl.id));
  }
  if (!have_phase) throw UsageError(fmt::format("{}: missing phase", tpl.id));
  if (tpl.language.empty()) {
    throw UsageError(fmt::format("{}: missing language", tpl.id));
  }
  tpl.body = std::string(content.substr(std::min(pos, content.size())));
  if (!tpl.body.empty() && tpl.body.back() == '\n') tpl.body.pop_back();
  if (!tpl.body.empty() && tpl.body.back() == '\r') tpl.body.pop_back();
  validate(tpl);
  return tpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  const std::string content = text::read_file(path);
  if (!text::is_valid_utf8(content)) {
    throw UsageError(fmt::format("{}: not valid UTF-8", path.string()));
  }
  return parse_template(content, path.stem().string());
}

std::string serialize_template(const PromptTemplate& tpl) {
  std::vector<std::string> keys;
  for (const std::string* key :
       {&tpl.keys.container, &tpl.keys.name, &tpl.keys.description,
        &tpl.keys.quote, &tpl.keys.indices}) {
    if (!key->empty()) {
      keys.push_back(fmt::format("{}={}", *key, canonical_for(tpl.keys, *key)));
    }
  }
  return fmt::format("id: {}\nphase: {}\nlanguage: {}\nkeys: {}\n---\n{}\n",
                     tpl.id, to_string(tpl.phase), tpl.language,
                     fmt::join(keys, ", "), tpl.body);
}

PromptTemplate resolve_template(const std::string& ref) {
  for (const auto& tpl : builtin_templates()) {
    if (tpl.id == ref) return tpl;
  }
  if (std::filesystem::is_regular_file(ref)) return load_template(ref);
  throw UsageError(fmt::format(
      "template '{}' is neither a builtin id nor an existing file", ref));
}

}  // namespace thema
