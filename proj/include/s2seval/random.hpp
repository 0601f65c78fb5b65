#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace s2seval::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// 64-bit FNV-1a; stable across platforms and runs.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Generator for stream `stream` of a run seeded with `seed`.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t stream_id) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(stream_id)));
}

// Uniform index in [0, n) by multiply-shift. Unlike
// std::uniform_int_distribution this gives the same sequence with every
// standard library.
inline std::size_t index(std::mt19937_64& gen, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(gen()) * n) >> 64);
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[index(gen, i)]);
    }
}

} // namespace s2seval::rng
