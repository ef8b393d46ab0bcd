// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace deepkd {

// Shortest-round-trip decimal with up to 17 significant digits, locale
// independent. Parsing the result reproduces the double bit for bit.
std::string format_double(double v);

// Strict parsers: the whole field must be consumed. `where` feeds the
// ParseError message (path:line style).
double parse_double(std::string_view field, const std::string& where);
std::size_t parse_size(std::string_view field, const std::string& where);

// Splits one CSV line on commas. No quoting; fields here are plain numbers
// and bare identifiers.
std::vector<std::string_view> split_fields(std::string_view line);

// Whole file as lines, tolerant of a trailing newline and CR line ends.
std::vector<std::string> read_lines(const std::string& path);

// Writes bytes exactly as given (binary mode).
void write_file(const std::string& path, std::string_view content);

}  // namespace deepkd
