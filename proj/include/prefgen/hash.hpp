#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace prefgen {

// FNV-1a, 64-bit. Used for cache keys and deterministic RNG stream ids.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(uint64_t value, uint64_t h = 0xcbf29ce484222325ull) {
    for (int i = 0; i < 8; ++i) {
        h ^= value & 0xff;
        h *= 0x100000001b3ull;
        value >>= 8;
    }
    return h;
}

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace prefgen
