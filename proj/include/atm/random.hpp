// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. Every consumer derives an independent
// std::mt19937_64 from (seed, tag, counter), so results never depend on call
// order across streams or on the number of workers. Conversions to uniform
// and normal variates are done here rather than through <random>
// distributions, whose output is implementation-defined.

#pragma once

#include <cstdint>
#include <random>

namespace atm {

enum class StreamTag : std::uint64_t {
    Atoms = 1,
    Pairs = 2,
    Codes = 3,
    Noise = 4,
    Init = 5,
    Batch = 6,
    Mask = 7,
    Head = 8,
    Split = 9,
    Balance = 10,
    Shuffle = 11,
};

/// SplitMix64 finalizer over the three inputs.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t counter);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, StreamTag tag, std::uint64_t counter = 0)
        : engine_(derive_seed(seed, tag, counter)) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, bound), rejection-sampled (no modulo bias).
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace atm
