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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace thema::text {

/// True when `s` is well-formed UTF-8 (no overlongs, no surrogates).
bool is_valid_utf8(std::string_view s);

/// Decodes well-formed UTF-8 into Unicode scalar values.
/// Throws UsageError on malformed input.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

/// Number of Unicode scalar values. Input must be valid UTF-8.
std::size_t scalar_count(std::string_view s);

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

/// Lowercases ASCII and the Latin-1 uppercase block (U+00C0..U+00DE).
std::string casefold(std::string_view s);

/// Letters for tokenization: ASCII alpha, and any code point from U+00C0 up,
/// except U+00D7, U+00F7 and general punctuation U+2000..U+206F.
bool is_letter(char32_t cp);

/// Whitespace-separated word count (used for soft word budgets).
std::size_t word_count(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Shortest round-tripping decimal for a double ("0.25", "0", "0.6").
std::string format_real(double v);

/// Fixed-precision decimal that never renders a negative zero.
std::string format_fixed(double v, int decimals);

/// Replaces every occurrence of `secret` with "***". Empty secret is a no-op.
std::string scrub(std::string_view s, std::string_view secret);

/// 32-bit FNV-1a.
std::uint32_t fnv1a32(std::string_view bytes);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

}  // namespace thema::text
