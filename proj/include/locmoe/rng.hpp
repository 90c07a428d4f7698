// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based helpers for reproducible randomness. Draws keyed by
// (seed, index...) do not depend on evaluation order, so per-token and
// per-chunk work can be split arbitrarily without changing results.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace locmoe::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

// Uniform in (0, 1); never returns 0 so it is safe under log().
constexpr double uniform_open(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal variate determined entirely by `key` (Box-Muller).
inline double normal_at(std::uint64_t key) noexcept {
    const double u1 = uniform_open(splitmix64(key));
    const double u2 = uniform_open(splitmix64(key ^ 0xd1b54a32d192ed03ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace locmoe::rng
