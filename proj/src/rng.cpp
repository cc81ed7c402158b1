#include "viewsynth/rng.hpp"

namespace viewsynth {

std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (hash_label(label) | 1ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng seeded_rng(std::uint64_t seed, std::string_view label) {
    return Rng(derive_seed(seed, label));
}

}  // namespace viewsynth
