#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace loft {

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& data) {
    return fnv1a64(data.data(), data.size());
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

std::string to_hex(std::uint64_t v);

} // namespace loft
