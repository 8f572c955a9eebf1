#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tpflow {

inline constexpr const char* csv_schema_version = "tpflow-csv-1";

/// Shortest round-trip decimal form; output is byte-stable for a fixed build.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::invalid_argument("csv: no column named " + name);
    }

    std::vector<double> column(const std::string& name) const {
        const std::size_t idx = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[idx]);
        return out;
    }
};

inline void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream os(path, std::ios::binary);  // binary keeps line endings stable
    if (!os) throw std::runtime_error("csv: cannot open " + path + " for writing");
    os << "# " << csv_schema_version << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        os << (i ? "," : "") << table.columns[i];
    os << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
        os << "\n";
    }
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool header_done = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field;
        if (!header_done) {
            while (std::getline(ss, field, ',')) table.columns.push_back(field);
            header_done = true;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
        if (row.size() != table.columns.size())
            throw std::runtime_error("csv: ragged row in " + path);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace tpflow
