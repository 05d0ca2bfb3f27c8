#ifndef DRIS_RNG_HPP
#define DRIS_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace dris {

// 64-bit FNV-1a over a label string.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; decorrelates nearby seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derive a child seed from a master seed and a purpose label, so every
// consumer gets an independent stream regardless of call order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return splitmix64(master ^ fnv1a64(label));
}

inline std::mt19937_64 named_stream(std::uint64_t master, std::string_view label) {
    return std::mt19937_64(derive_seed(master, label));
}

}  // namespace dris

#endif
