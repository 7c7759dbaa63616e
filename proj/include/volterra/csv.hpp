#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace volterra::csv {

// Full round-trip precision, '.' decimal separator regardless of locale.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::invalid_argument("csv: no column named '" + name + "'");
    }
};

inline void write(const std::string& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("csv: cannot open " + path + " for writing");
    for (std::size_t i = 0; i < table.header.size(); ++i)
        out << (i ? "," : "") << table.header[i];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
}

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    Table table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            if (cell == "nan") row.push_back(std::nan(""));
            else if (cell == "inf") row.push_back(HUGE_VAL);
            else if (cell == "-inf") row.push_back(-HUGE_VAL);
            else {
                // strtod instead of stod: subnormal cells set ERANGE but still
                // parse to the correctly rounded value and must round-trip
                const char* begin = cell.c_str();
                char* end = nullptr;
                errno = 0;
                const double v = std::strtod(begin, &end);
                const bool consumed = end == begin + cell.size() && end != begin;
                const bool overflow = errno == ERANGE && std::isinf(v);
                if (!consumed || overflow)
                    throw std::runtime_error("csv: bad numeric cell '" + cell + "' in " + path);
                row.push_back(v);
            }
        }
        if (row.size() != table.header.size())
            throw std::runtime_error("csv: ragged row in " + path);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace volterra::csv
