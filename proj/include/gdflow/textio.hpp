#pragma once

#include "gdflow/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

namespace gdflow {

// Shortest exact decimal form: %.17g round-trips IEEE doubles bit-for-bit.
inline std::string fmt_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(delim, pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
}

inline double parse_f64(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t.empty()) throw DataError(what + ": empty number");
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        throw DataError(what + ": bad number '" + t + "'");
    return v;
}

inline long long parse_i64(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t.empty()) throw DataError(what + ": empty integer");
    char* end = nullptr;
    long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size())
        throw DataError(what + ": bad integer '" + t + "'");
    return v;
}

} // namespace gdflow
