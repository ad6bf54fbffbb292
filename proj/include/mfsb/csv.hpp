/*
 Copyright 2026 The mfsb Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MFSB_CSV_HPP
#define MFSB_CSV_HPP

#include "mfsb/errors.hpp"
#include "mfsb/linalg.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mfsb::csv {

/// Full-precision (17 significant digit) decimal form.
inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& cells)
{
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

inline void append(std::vector<std::string>& row, const Vec& v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(num(v(i)));
}

inline std::vector<std::string> split(const std::string& line)
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

inline double parse_double(const std::string& s, const std::string& where)
{
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad number \"" + s + "\" in " + where);
    return v;
}

/// Reads a header line plus numeric rows.
inline std::vector<std::vector<double>> read_numeric(std::istream& is, const std::string& where,
                                                     std::vector<std::string>* header = nullptr)
{
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty file " + where);
    if (header) *header = split(line);
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        for (const auto& cell : split(line)) r.push_back(parse_double(cell, where));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mfsb::csv

#endif  // MFSB_CSV_HPP
