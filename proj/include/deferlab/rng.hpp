#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace deferlab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to turn (seed, tag...) tuples into
/// well-separated engine seeds so independent streams never share state.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t s = mix64(seed);
    for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
    return Rng(derive_seed(seed, tags));
}

// Stream tags. Keep these stable: changing one changes every frozen artifact.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t finetune = 3;
inline constexpr std::uint64_t blobs = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t expert = 6;
inline constexpr std::uint64_t annotators = 7;
inline constexpr std::uint64_t drivers = 8;
inline constexpr std::uint64_t trips = 9;
inline constexpr std::uint64_t unlabeled = 10;
inline constexpr std::uint64_t av_draws = 11;
inline constexpr std::uint64_t self_train = 12;
inline constexpr std::uint64_t policy = 13;
inline constexpr std::uint64_t calib = 14;
}  // namespace stream

}  // namespace deferlab
