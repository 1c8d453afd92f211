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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace thema::csv {

using Row = std::vector<std::string>;

/// RFC-4180 reader: comma-delimited, double-quote quoting, CRLF or LF line
/// ends, quoted fields may span lines. A UTF-8 BOM is skipped. A trailing
/// line break does not produce an empty record.
/// Throws ParseError on an unterminated quote or stray quote character.
std::vector<Row> parse(std::string_view data);

std::vector<Row> read_file(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape_field(std::string_view field);

/// One record terminated by CRLF.
std::string format_row(const Row& row);

}  // namespace thema::csv
