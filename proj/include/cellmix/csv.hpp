/*
   Copyright 2026 The cellmix authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

/// @file csv.hpp
/// @brief CSV tables with a provenance comment header.

#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace cellmix {

using ConfigList = std::vector<std::pair<std::string, std::string>>;

struct CsvTable {
    /// Lines of the leading "# " header, without the marker.
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column; throws ValidationError if absent.
    std::size_t column(const std::string& name) const;
};

/// Shortest round-trip text for a double ("nan", "inf", "-inf" for
/// non-finite values).
std::string format_double(double v);
/// Parses format_double output; throws ValidationError on junk.
double parse_double(const std::string& text);

/// Provenance lines: artifact version, command, then key = value per entry.
std::vector<std::string> provenance(const std::string& command, const ConfigList& config);

void write_csv(std::ostream& out, const CsvTable& table);
CsvTable read_csv(std::istream& in);

/// Writes to `path`, or to standard output when path is "-".
void write_csv_file(const std::string& path, const CsvTable& table);
CsvTable read_csv_file(const std::string& path);

} // namespace cellmix
