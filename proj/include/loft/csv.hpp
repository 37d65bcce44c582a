#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

namespace loft {

// Shortest round-trip decimal formatting; keeps CSV output byte-reproducible
// and locale-independent.
inline std::string format_double(double v) {
    char buf[40];
    const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
    char buf[24];
    const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string join_csv(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i != 0) {
            line += ',';
        }
        line += fields[i];
    }
    line += '\n';
    return line;
}

} // namespace loft
