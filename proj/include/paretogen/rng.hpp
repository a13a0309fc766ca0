// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace paretogen {

using Rng = std::mt19937_64;

/// Derives an independent stream from a root seed and a list of stream tags.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (auto t : tags) {
        words.push_back(static_cast<std::uint32_t>(t));
        words.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// A child seed for a sub-run (one budget of a sweep, one method of a comparison).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    return make_rng(seed, tags)();
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// stream tags used across the pipeline
namespace stream {
inline constexpr std::uint64_t records = 1;
inline constexpr std::uint64_t grid = 2;
inline constexpr std::uint64_t evaluator = 3;
inline constexpr std::uint64_t generator = 4;
inline constexpr std::uint64_t inference = 5;
inline constexpr std::uint64_t synthetic = 6;
inline constexpr std::uint64_t independent = 7;
inline constexpr std::uint64_t histogram = 8;
}  // namespace stream

}  // namespace paretogen
