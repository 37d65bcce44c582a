#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "loft/partition.hpp"

namespace loft {

// Flat little-endian float64 wire format: all conv banks in layer order
// followed by the head, 8 bytes per parameter, no framing. Communication
// ledgers count exactly these bytes.
inline void append_f64_le(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xffu));
    }
}

inline std::vector<std::uint8_t> serialize_weights(const ConvStackWeights& w) {
    std::vector<std::uint8_t> out;
    out.reserve(w.param_count() * 8);
    for (const Tensor& t : w.layers) {
        for (double v : t.data) {
            append_f64_le(out, v);
        }
    }
    for (double v : w.head.data) {
        append_f64_le(out, v);
    }
    return out;
}

inline std::uint64_t serialized_bytes(const ConvStackWeights& w) {
    return static_cast<std::uint64_t>(w.param_count()) * 8u;
}

} // namespace loft
