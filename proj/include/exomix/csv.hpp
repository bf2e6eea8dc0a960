#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "exomix/error.hpp"

namespace exomix::csv {

/// Split one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_line(std::string_view line)
{
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based source line of each row

    /// Column position; throws SchemaMismatch naming the column when absent.
    std::size_t column(const std::string& name) const
    {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name)
                return k;
        throw SchemaMismatch("missing column '" + name + "'");
    }

    bool has_column(const std::string& name) const
    {
        for (const auto& h : header)
            if (h == name)
                return true;
        return false;
    }
};

inline Table read(std::istream& in)
{
    Table t;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw SchemaMismatch("input has no header row");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);
    t.header = split_line(line);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        auto fields = split_line(line);
        if (fields.size() != t.header.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    return t;
}

inline double parse_double(const std::string& text, std::size_t line_no, const std::string& column)
{
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && *first == ' ')
        ++first;
    if (first < last && *first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    while (ptr < last && *ptr == ' ')
        ++ptr;
    if (ec != std::errc() || ptr != last || first == last)
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + text + "' in column '" + column +
                         "' as a number");
    return value;
}

inline long long parse_integer(const std::string& text, std::size_t line_no, const std::string& column)
{
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + text + "' in column '" + column +
                         "' as an integer");
    return value;
}

/// Round-trippable decimal form (17 significant digits).
inline std::string format(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k)
            out << ',';
        out << quote(fields[k]);
    }
    out << '\n';
}

} // namespace exomix::csv
