#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wie/error.hpp"

namespace wie::csv {

/// Two-column numeric table (x, y). Lines starting with '#' and a non-numeric header are skipped.
inline std::vector<std::pair<double, double>> read_two_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("csv: cannot open " + path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        for (auto& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ss(line);
        double x, y;
        if (!(ss >> x >> y)) {
            if (rows.empty() && lineno == 1) continue;  // header
            throw InvalidArgument("csv: malformed row " + std::to_string(lineno) + " in " + path);
        }
        if (!std::isfinite(x) || !std::isfinite(y))
            throw InvalidArgument("csv: non-finite value at row " + std::to_string(lineno) + " in " + path);
        rows.emplace_back(x, y);
    }
    if (rows.empty()) throw InvalidArgument("csv: no data rows in " + path);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i].first > rows[i - 1].first))
            throw InvalidArgument("csv: first column must be strictly increasing in " + path);
    }
    return rows;
}

/// Piecewise-linear interpolation over a strictly increasing table; values are held beyond the ends.
inline double interpolate(const std::vector<std::pair<double, double>>& table, double x) {
    if (x <= table.front().first) return table.front().second;
    if (x >= table.back().first) return table.back().second;
    std::size_t lo = 0, hi = table.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (table[mid].first <= x ? lo : hi) = mid;
    }
    const auto& [x0, y0] = table[lo];
    const auto& [x1, y1] = table[hi];
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

/// Shortest round-trip decimal representation.
/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace wie::csv
