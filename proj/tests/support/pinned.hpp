#pragma once

// Regression values printed by tests/oracles/pin_fixtures.cpp for the toy
// problem in fixtures.hpp. Regenerate only after an intentional numerical
// change.

namespace viewsynth::testing::pinned {

struct DecilePair {
    const char* phase;
    double first;
    double last;
};

inline constexpr DecilePair kScheduleDeciles[4] = {
    {"embed_input", 0.31216575586410439, 0.2888398903139146},
    {"lora_input", 0.25927881691576765, 0.13852329608560496},
    {"embed_view", 0.22890469543479583, 0.1539172266528985},
    {"lora_view", 0.12589890858081826, 0.12367759308942128},
};

// Reconstruction error of the guidance view (seed 99, 64 draws) from the
// state after the input-image phases and from the final state.
inline constexpr double kViewReconstructionPhaseB = 0.29012828932532442;
inline constexpr double kViewReconstructionFinal = 0.12573746014797088;

// 200-step single-phase runs (rng seeds 11 and 12).
inline constexpr double kEmbeddingFirstDecile = 0.43750404239215956;
inline constexpr double kEmbeddingLastDecile = 0.20284027167878352;
inline constexpr double kAdapterFirstDecile = 0.22566294164775685;
inline constexpr double kAdapterLastDecile = 0.20958495456619683;

// SHA-256 of the 8-bit output of a one-step sampling run (rng seed 5).
inline constexpr const char* kOneStepSampleSha256 =
    "75fc5334e3e1c9575b370cf794e3b1a0b8452214b06fdaad91b7d26c736930fe";

// MI of independent uniform 64x64 noise pairs, 8 bins, bandwidth 0.02, over
// 100 seeds: the 99th percentile (nearest rank) is the null threshold.
inline constexpr double kMiNullP99 = 0.0079222340572646342;
inline constexpr double kMiNullMax = 0.0090185336552382287;

// Mean MI(output, input) over sampling seeds 0..9 at guidance weight 0 and 0.5.
inline constexpr double kMiUnguided = 0.32991680347101682;
inline constexpr double kMiGuided = 0.37305528631219043;

inline constexpr double kLpipsInverted = 11.999999994071986;
inline constexpr double kLpipsJitter = 0.010687529270826519;

}  // namespace viewsynth::testing::pinned
