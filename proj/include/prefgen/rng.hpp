#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "prefgen/hash.hpp"

namespace prefgen {

// Deterministic splitmix64 stream. Streams are keyed by content
// (seed + instruction id + slot + purpose), never by call order, so
// results are identical for any worker count or completion order.
// Distributions are hand-rolled: the std:: ones are implementation-defined
// and would break the byte-identical-output contract across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_u01() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Uniform integer in [lo, hi], inclusive.
    int64_t next_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // Standard normal via Box-Muller (cosine branch only).
    double next_normal() {
        double u1 = next_u01();
        double u2 = next_u01();
        if (u1 <= 0.0) u1 = 5e-324;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    uint64_t state_;
};

// Stream constructor: mixes the seed with arbitrary key parts.
class RngKey {
public:
    explicit RngKey(uint64_t seed) : h_(fnv1a64(seed)) {}
    RngKey& with(std::string_view part) { h_ = fnv1a64(part, h_); return *this; }
    RngKey& with(uint64_t part) { h_ = fnv1a64(part, h_); return *this; }
    RngKey& with(int part) { h_ = fnv1a64(static_cast<uint64_t>(part), h_); return *this; }
    Rng rng() const { return Rng(h_); }

private:
    uint64_t h_;
};

} // namespace prefgen
