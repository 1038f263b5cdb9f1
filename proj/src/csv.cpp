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

#include "cellmix/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cellmix/errors.hpp"

namespace cellmix {

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

std::size_t CsvTable::column(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw ValidationError("missing CSV column '" + name + "'");
}

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text)
{
    if (text == "nan") return std::nan("");
    if (text == "inf") return HUGE_VAL;
    if (text == "-inf") return -HUGE_VAL;
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ValidationError("not a number: '" + text + "'");
    return v;
}

std::vector<std::string> provenance(const std::string& command, const ConfigList& config)
{
    std::vector<std::string> lines;
    lines.push_back(std::string("cellmix ") + CELLMIX_VERSION);
    lines.push_back("command = " + command);
    for (const auto& [k, v] : config) lines.push_back(k + " = " + v);
    return lines;
}

void write_csv(std::ostream& out, const CsvTable& table)
{
    for (const auto& c : table.comments) out << "# " << c << '\n';
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "," : "") << table.columns[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

CsvTable read_csv(std::istream& in)
{
    CsvTable t;
    std::string line;
    bool have_columns = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#", 0) == 0) {
            if (!have_columns) t.comments.push_back(line.size() > 2 ? line.substr(2) : "");
            continue;
        }
        if (line.empty()) continue;
        if (!have_columns) {
            t.columns = split_line(line);
            have_columns = true;
            continue;
        }
        auto row = split_line(line);
        if (row.size() != t.columns.size())
            throw ValidationError("CSV row has " + std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(t.columns.size()));
        t.rows.push_back(std::move(row));
    }
    if (!have_columns) throw ValidationError("CSV input has no header row");
    return t;
}

void write_csv_file(const std::string& path, const CsvTable& table)
{
    if (path == "-") {
        write_csv(std::cout, table);
        std::cout.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    write_csv(f, table);
    if (!f) throw Error("write to '" + path + "' failed");
}

CsvTable read_csv_file(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + path + "'");
    return read_csv(f);
}

} // namespace cellmix
