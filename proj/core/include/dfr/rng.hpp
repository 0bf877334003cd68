// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random source. All draws are derived from the raw 64-bit
// engine output with fixed arithmetic, so sequences are reproducible across
// platforms and standard library versions. Every generator in the pipeline
// takes one of these; none touch global state.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dfr {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        auto r = static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * span) >> 64);
        return lo + static_cast<int>(r);
    }

    /// Standard normal via Box-Muller. The spare draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Derive an independent child stream. Mixing follows splitmix64 so the
    /// same (seed, stream) pair always yields the same child.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_mix_ + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

private:
    explicit Rng(std::uint64_t seed, int) : engine_(seed) {}

    std::mt19937_64 engine_;
    std::uint64_t seed_mix_ = engine_();
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dfr
