#pragma once

#include <cstdint>
#include <random>

namespace gnnsim {

// splitmix64 finalizer; the basis for all stateless per-element randomness.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }

inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) {
    return mix64(mix64(a, b) ^ c);
}

inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix64(mix64(a, b, c) ^ d);
}

// Uniform double in [0,1) from a hash value.
inline double hash_unit(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Seeded engine for bulk draws (generators, shuffles, init).
inline std::mt19937_64 make_engine(uint64_t seed) {
    return std::mt19937_64(mix64(seed));
}

inline std::mt19937_64 make_engine(uint64_t seed, uint64_t stream) {
    return std::mt19937_64(mix64(seed, stream));
}

}  // namespace gnnsim
