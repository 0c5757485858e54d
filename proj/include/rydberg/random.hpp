#pragma once

#include <cstdint>
#include <random>

namespace rydberg {

/// Engine used for every stochastic draw. mt19937_64 output is fixed by the standard,
/// so streams are reproducible across platforms as long as we avoid the
/// implementation-defined std:: distributions.
using Engine = std::mt19937_64;

/// Independent sub-streams drawn for one configuration.
enum class StreamTag : std::uint32_t {
    Positions = 1,
    Velocities = 2,
    SpeciesAssignment = 3,
};

/// SplitMix64 finalizer; a bijective mixer on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of configuration `index` within an ensemble started from `master_seed`.
/// Depends only on the pair, never on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return mix64(mix64(master_seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed, StreamTag tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag)};
    return Engine(seq);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n) by rejection; n > 0.
inline std::uint64_t uniform_index(Engine& engine, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine();
    } while (x >= limit);
    return x % n;
}

} // namespace rydberg
