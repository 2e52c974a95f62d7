#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>
#include <vector>

#include "msreid/errors.hpp"

namespace msreid {

// Shortest decimal form that parses back to the identical double. All
// numeric artifacts go through these two so serialization is lossless.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DecodeError("bad float field: '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DecodeError("bad integer field: '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Lines with trailing newline characters stripped; skips a UTF-8 BOM if present.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace msreid
