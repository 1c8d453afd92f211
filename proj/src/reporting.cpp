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

#include "thema/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "thema/csv.hpp"
#include "thema/text.hpp"

namespace thema {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (c == '|') {
      out += "\\|";
    } else if (c == '\n' || c == '\r') {
      out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::uint8_t lerp_channel(std::uint8_t a, std::uint8_t b, double t) {
  const double v = a + (static_cast<double>(b) - a) * t;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string matrix_csv(const SimilarityMatrix& m) {
  validate(m);
  csv::Row header{""};
  header.insert(header.end(), m.col_labels.begin(), m.col_labels.end());
  std::string out = csv::format_row(header);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    csv::Row row{m.row_labels[r]};
    for (const double v : m.values[r]) row.push_back(text::format_fixed(v, 4));
    out += csv::format_row(row);
  }
  return out;
}

void export_matrix_csv(const SimilarityMatrix& m, const fs::path& path) {
  text::write_file_atomic(path, matrix_csv(m));
}

Rgb parse_hex_color(std::string_view hex) {
  if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
  if (hex.size() != 6) throw UsageError(fmt::format("bad color '{}'", hex));
  std::array<int, 6> d{};
  for (std::size_t i = 0; i < 6; ++i) {
    d[i] = hex_digit(hex[i]);
    if (d[i] < 0) throw UsageError(fmt::format("bad color '{}'", hex));
  }
  return Rgb{static_cast<std::uint8_t>(d[0] * 16 + d[1]),
             static_cast<std::uint8_t>(d[2] * 16 + d[3]),
             static_cast<std::uint8_t>(d[4] * 16 + d[5])};
}

std::string to_hex(Rgb c) { return fmt::format("#{:02x}{:02x}{:02x}", c.r, c.g, c.b); }

Rgb ColorScale::at(double value) const {
  const double v = std::clamp(value, -1.0, 1.0);
  const Rgb& from = v < 0.0 ? negative : zero;
  const Rgb& to = v < 0.0 ? zero : positive;
  const double t = v < 0.0 ? v + 1.0 : v;
  return Rgb{lerp_channel(from.r, to.r, t), lerp_channel(from.g, to.g, t),
             lerp_channel(from.b, to.b, t)};
}

std::string heatmap_svg(const SimilarityMatrix& m, const ColorScale& scale,
                        std::string_view title) {
  validate(m);
  if (m.rows() == 0 || m.cols() == 0) throw UsageError("heatmap of an empty matrix");
  constexpr int kCellW = 64;
  constexpr int kCellH = 36;
  constexpr int kCharW = 7;
  constexpr int kPad = 10;
  const auto label_width = [](const std::vector<std::string>& labels) {
    std::size_t longest = 0;
    for (const auto& l : labels) longest = std::max(longest, text::scalar_count(l));
    return static_cast<int>(std::min<std::size_t>(longest, 60)) * kCharW;
  };
  const int left = label_width(m.row_labels) + 2 * kPad;
  // Column labels are rotated -60 degrees; sin(60) ~ 0.87.
  const int top = static_cast<int>(label_width(m.col_labels) * 0.87) + 2 * kPad +
                  (title.empty() ? 0 : 24);
  const int width = left + static_cast<int>(m.cols()) * kCellW + 4 * kPad;
  const int height = top + static_cast<int>(m.rows()) * kCellH + kPad;

  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"monospace\" font-size=\"11\">\n",
      width, height, width, height);
  out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
                     width, height);
  if (!title.empty()) {
    out += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"14\">{}</text>\n", kPad,
                       xml_escape(title));
  }
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const int x = left + static_cast<int>(c) * kCellW + kCellW / 2;
    const int y = top - kPad / 2;
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" transform=\"rotate(-60 {} {})\">{}</text>\n", x,
        y, x, y, xml_escape(m.col_labels[c]));
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const int y = top + static_cast<int>(r) * kCellH;
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
        left - kPad, y + kCellH / 2, xml_escape(m.row_labels[r]));
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const int x = left + static_cast<int>(c) * kCellW;
      const double v = m.values[r][c];
      const Rgb fill = scale.at(v);
      const double luminance =
          (0.2126 * fill.r + 0.7152 * fill.g + 0.0722 * fill.b) / 255.0;
      out += fmt::format(
          "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" "
          "stroke=\"#808080\" stroke-width=\"0.5\"/>\n",
          x, y, kCellW, kCellH, to_hex(fill));
      out += fmt::format(
          "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" dominant-baseline=\"middle\" "
          "fill=\"{}\">{}</text>\n",
          x + kCellW / 2, y + kCellH / 2, luminance < 0.5 ? "#ffffff" : "#000000",
          text::format_fixed(v, 2));
    }
  }
  out += "</svg>\n";
  return out;
}

void render_heatmap_svg(const SimilarityMatrix& m, const fs::path& path,
                        const ColorScale& scale, std::string_view title) {
  text::write_file_atomic(path, heatmap_svg(m, scale, title));
}

std::string stability_markdown(const StabilityReport& report) {
  const auto run_label = [&](std::size_t run) {
    return fmt::format("T={}", text::format_real(report.runs[run].temperature));
  };
  std::string out;
  out += fmt::format("Match threshold {} (embedder {}).\n\n",
                     text::format_real(report.match_threshold), report.embedder_id);
  out += "| Cluster | Runs | Members | Min pair score |\n|---|---|---|---|\n";
  for (const auto& c : report.clusters) {
    std::vector<std::string> runs;
    std::vector<std::string> members;
    double min_score = 1.0;
    for (const auto& m : c.members) {
      runs.push_back(run_label(m.run));
      members.push_back(fmt::format("{} ({})", md_cell(m.name), run_label(m.run)));
    }
    for (const auto& s : c.scores) min_score = std::min(min_score, s.score);
    out += fmt::format("| {} | {} | {} | {} |\n", md_cell(c.name),
                       fmt::join(runs, ", "), fmt::join(members, "; "),
                       text::format_fixed(min_score, 2));
  }
  out += "\nPossibly not relevant (appear in a single run):\n\n";
  if (report.singletons.empty()) out += "- none\n";
  for (const auto& s : report.singletons) {
    out += fmt::format("- {} ({})\n", md_cell(s.name), run_label(s.run));
  }
  return out;
}

std::string diagonal_markdown(const DiagonalReport& report) {
  std::string out = fmt::format(
      "{} (min {}, mean {}, max {})\n\n| Row | Column | Score | |\n|---|---|---|---|\n",
      report.summary(), text::format_fixed(report.min, 2),
      text::format_fixed(report.mean, 2), text::format_fixed(report.max, 2));
  for (const auto& e : report.entries) {
    out += fmt::format("| {} | {} | {} | {} |\n", md_cell(e.row_label),
                       md_cell(e.col_label), text::format_fixed(e.score, 2),
                       e.below_threshold ? "below threshold" : "");
  }
  return out;
}

std::string make_run_id() {
  const std::string ts = utc_timestamp();  // 2026-10-19T10:15:00Z
  std::string compact;
  for (const char c : ts) {
    if (c != '-' && c != ':') compact.push_back(c);
  }
  thread_local std::mt19937 rng{std::random_device{}()};
  return fmt::format("{}-{:06x}", compact, rng() & 0xFFFFFFu);
}

json to_json(const RunManifest& m) {
  json phases = json::object();
  for (const auto& [name, s] : m.phases) {
    phases[name] = {{"duration_ms", s.duration_ms},
                    {"input_tokens", s.input_tokens},
                    {"output_tokens", s.output_tokens},
                    {"requests", s.requests},
                    {"retries", s.retries}};
  }
  json doc;
  doc["run_id"] = m.run_id;
  doc["created_at"] = m.created_at;
  doc["updated_at"] = m.updated_at;
  doc["config"] = m.config_snapshot;
  doc["prompt_fingerprints"] = m.prompt_fingerprints;
  doc["model_ids"] = m.model_ids;
  doc["temperatures"] = m.temperatures;
  doc["files"] = m.file_index;
  doc["phases"] = phases;
  doc["failures"] = m.failures;
  doc["notes"] = m.notes;
  return doc;
}

RunManifest manifest_from_json(const json& doc) {
  RunManifest m;
  try {
    m.run_id = doc.at("run_id").get<std::string>();
    m.created_at = doc.value("created_at", std::string{});
    m.updated_at = doc.value("updated_at", std::string{});
    m.config_snapshot = doc.value("config", json::object());
    m.prompt_fingerprints =
        doc.value("prompt_fingerprints", std::map<std::string, std::string>{});
    m.model_ids = doc.value("model_ids", std::map<std::string, std::string>{});
    m.temperatures = doc.value("temperatures", std::vector<double>{});
    m.file_index = doc.value("files", std::map<std::string, std::string>{});
    m.failures = doc.value("failures", std::vector<std::string>{});
    m.notes = doc.value("notes", std::vector<std::string>{});
    if (doc.contains("phases")) {
      for (const auto& [name, s] : doc["phases"].items()) {
        m.phases[name] = PhaseStats{s.value("duration_ms", std::int64_t{0}),
                                    s.value("input_tokens", std::int64_t{0}),
                                    s.value("output_tokens", std::int64_t{0}),
                                    s.value("requests", std::int64_t{0}),
                                    s.value("retries", std::int64_t{0})};
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("manifest: {}", e.what()));
  }
  return m;
}

RunManifest load_or_create_manifest(const fs::path& run_dir,
                                    const std::string& run_id) {
  const fs::path path = run_dir / "manifest.json";
  if (fs::exists(path)) {
    try {
      return manifest_from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
      throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
  }
  RunManifest m;
  m.run_id = run_id;
  m.created_at = utc_timestamp();
  return m;
}

void write_manifest(const RunManifest& m, const fs::path& run_dir) {
  for (const auto& [name, rel] : m.file_index) {
    if (!fs::exists(run_dir / rel)) {
      throw IoError(fmt::format("manifest entry '{}' points at missing file {}",
                                name, (run_dir / rel).string()));
    }
  }
  RunManifest copy = m;
  copy.updated_at = utc_timestamp();
  text::write_file_atomic(run_dir / "manifest.json", to_json(copy).dump(2) + "\n");
}

void RunLog::add(std::string_view line) {
  std::lock_guard lock(mu_);
  lines_.emplace_back(line);
}

std::vector<std::string> RunLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

std::string RunLog::text() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& l : lines_) out += l + "\n";
  return out;
}

std::string run_summary_markdown(const RunManifest& manifest,
                                 const RunSummaryInputs& in) {
  std::string out = fmt::format("# Run {}\n\n", manifest.run_id);
  if (!manifest.model_ids.empty()) {
    out += "Models: ";
    std::vector<std::string> models;
    for (const auto& [phase, model] : manifest.model_ids) {
      models.push_back(fmt::format("{} = {}", phase, model));
    }
    out += fmt::format("{}\n\n", fmt::join(models, ", "));
  }

  out += "## Corpus and codebook\n\n";
  if (in.transcript_count) {
    out += fmt::format("- Transcripts: {}\n", *in.transcript_count);
  }
  if (in.codebook) {
    const auto& cb = *in.codebook;
    out += fmt::format("- Codebook: {} codes from {} transcripts\n", cb.codes.size(),
                       cb.per_transcript_counts.size());
    if (!cb.per_transcript_counts.empty()) {
      std::size_t lo = SIZE_MAX;
      std::size_t hi = 0;
      for (const auto& [id, n] : cb.per_transcript_counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      out += fmt::format("- Codes per transcript: {} to {}\n", lo, hi);
    }
  }
  if (in.saturation) {
    out += fmt::format(
        "- Saturation: {} total / {} unique = {} ({})\n", in.saturation->total_codes,
        in.saturation->unique_codes,
        text::format_fixed(in.saturation->ratio_total_to_unique, 3),
        in.saturation->normalization);
  }
  if (in.quote_audit) {
    out += fmt::format("- Quotes found verbatim in their transcript: {}%\n",
                       text::format_fixed(*in.quote_audit * 100.0, 1));
  }
  out += "\n";

  for (const auto& set : in.theme_sets) {
    out += fmt::format("## Themes at T={} ({} themes, minimum {})\n\n",
                       text::format_real(set.temperature), set.themes.size(),
                       set.min_themes);
    out += "| # | Theme | Codes |\n|---|---|---|\n";
    for (std::size_t i = 0; i < set.themes.size(); ++i) {
      const auto& t = set.themes[i];
      std::vector<std::string> idx;
      for (const auto k : t.code_indices) idx.push_back(std::to_string(k));
      out += fmt::format("| {} | {} | {} |\n", i + 1, md_cell(t.name),
                         fmt::join(idx, ", "));
    }
    for (const auto& w : set.warnings) out += fmt::format("\n> warning: {}\n", w);
    out += "\n";
  }

  if (in.stability) {
    out += "## Stability across temperatures\n\n";
    out += stability_markdown(*in.stability);
    out += "\n";
  }

  if (!in.evaluations.empty()) {
    out += "## Evaluation\n\n";
    for (const auto& e : in.evaluations) {
      out += fmt::format("### {}\n\nEmbedded text: {}. Matrix: [{}]({}), heatmap: [{}]({})\n\n",
                         e.name, e.text_mode, e.csv_path, e.csv_path, e.svg_path,
                         e.svg_path);
      if (e.diagonal) out += diagonal_markdown(*e.diagonal) + "\n";
      if (!e.unmatched.empty()) {
        out += fmt::format("Unmatched: {}\n\n", fmt::join(e.unmatched, "; "));
      }
    }
  }

  if (in.human_scores) {
    const auto& h = *in.human_scores;
    out += fmt::format("## Human scores (rater {})\n\n{}\n\n",
                       h.set.rater_id, h.summary.text());
    out += "| Row | Column | Score | Normalized |\n|---|---|---|---|\n";
    for (const auto& s : h.set.scores) {
      out += fmt::format("| {} | {} | {} | {} |\n", md_cell(s.row_label),
                         md_cell(s.col_label), text::format_real(s.score),
                         text::format_fixed(s.normalized(), 2));
    }
    out += "\n";
  }

  if (!in.notes.empty()) {
    out += "## Notes\n\n";
    for (const auto& n : in.notes) out += fmt::format("- {}\n", n);
    out += "\n";
  }
  out += "## Failures\n\n";
  if (in.failures.empty()) out += "- none\n";
  for (const auto& f : in.failures) out += fmt::format("- {}\n", md_cell(f));
  return out;
}

fs::path write_run_summary(const RunManifest& manifest, const RunSummaryInputs& inputs,
                           const fs::path& run_dir) {
  const fs::path path = run_dir / "summary.md";
  text::write_file_atomic(path, run_summary_markdown(manifest, inputs));
  return path;
}

}  // namespace thema
