#include "loft/hash.hpp"

namespace loft {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xfu];
        v >>= 4;
    }
    return out;
}

} // namespace loft
