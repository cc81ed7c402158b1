#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace viewsynth {

/// Deterministic random stream. Copies continue independently from the
/// same state, which tests use to replay a draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    /// Inclusive range.
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// FNV-1a, 64 bit.
std::uint64_t hash_label(std::string_view label) noexcept;

/// Mixes a seed and a label into a new 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept;

/// Identical (seed, label) pairs yield identical streams; distinct labels or
/// seeds yield unrelated streams.
Rng seeded_rng(std::uint64_t seed, std::string_view label);

}  // namespace viewsynth
