// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace reora {

/// Deterministic PRNG: xoshiro256** seeded through splitmix64.
/// The integer stream is bit-identical across platforms; floating-point
/// derivations (uniform, Box-Muller normal) are deterministic given the
/// stream and one libm.
class Rng {
public:
    static constexpr const char* kAlgorithm = "xoshiro256** (splitmix64 seeding)";

    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0,1), 53 random mantissa bits.
    double uniform();
    /// Uniform integer in [0,n), n > 0. Lemire multiply-shift reduction.
    long uniform_int(long n);
    /// Standard normal via Box-Muller (two uniforms per pair, second cached).
    double normal();
    double normal(double mean, double stddev);

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t s_[4];
    std::uint64_t seed_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64_next(std::uint64_t& state);

/// Seed-plan derivation: child = f(master, tag). Components of a run are
/// seeded with distinct tags so streams can be reproduced independently.
std::uint64_t child_seed(std::uint64_t master, std::string_view tag);

}  // namespace reora
