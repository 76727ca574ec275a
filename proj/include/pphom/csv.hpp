#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pphom/error.hpp"

namespace pphom {

/// Header plus string cells; numbers are formatted with format_real.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != header.size()) throw Error("csv row has " + std::to_string(row.size()) + " cells, header has " +
                                                     std::to_string(header.size()));
        rows.push_back(std::move(row));
    }
};

/// Shortest round-trip form is not required; 17 significant digits are.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_csv(const CsvTable& t, std::ostream& out) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << csv_escape(cells[i]);
        }
        out << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
}

inline void write_csv(const CsvTable& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_csv(t, out);
    out.flush();
    if (!out) throw Error("write to '" + path + "' failed");
}

/// RFC-4180 reader (quoted fields may contain commas, quotes and newlines).
inline CsvTable read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string cell;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    cell += '"';
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            rec.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && in.peek() == '\n') in.get(c);
            rec.push_back(std::move(cell));
            cell.clear();
            records.push_back(std::move(rec));
            rec.clear();
            any = false;
        } else {
            cell += c;
        }
    }
    if (quoted) throw Error("unterminated quoted csv field");
    if (any) {
        rec.push_back(std::move(cell));
        records.push_back(std::move(rec));
    }
    CsvTable t;
    if (records.empty()) return t;
    t.header = records.front();
    for (std::size_t i = 1; i < records.size(); ++i) t.add_row(records[i]);
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return read_csv(in);
}

} // namespace pphom
