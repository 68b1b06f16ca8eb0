/* Copyright 2026 The tbvi Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tbvi {

// RFC 4180 tables: CRLF line ends, header row first, fields quoted when they
// contain a comma, quote or line break.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws FormatError when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
};

std::string csv_field(const std::string& value);
std::string csv_line(const std::vector<std::string>& fields);

// Throws FormatError on ragged rows or unterminated quotes.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// Shortest representation that round-trips the double; "" for NaN.
std::string format_number(double value);

}  // namespace tbvi
