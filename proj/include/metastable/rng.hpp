#pragma once

#include <cstdint>

namespace metastable {

// SplitMix64: tiny, portable, deterministic. All randomized machinery in the
// library (samplers, random schedule batteries) derives from this so that a
// fixed seed reproduces results bit-exactly on every platform.
struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n). Multiply-shift; the (negligible) bias is irrelevant
    // here, determinism is not.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Uniform double in [0, 1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool coin() { return (next() & 1ULL) != 0; }
};

// Stream splitting: replicate i of a run seeded with s draws from
// derive_seed(s, i). Keeps per-replicate work order-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mix(seed ^ (0xA0761D6478BD642FULL + index * 0xE7037ED1A0B428DBULL));
    return mix.next();
}

}  // namespace metastable
