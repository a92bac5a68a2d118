#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace lstmkd {

/// Deterministic xoshiro256** generator seeded through splitmix64.
///
/// The state expansion and the output function are fixed so that a given seed
/// yields the same stream on every platform and compiler. The floating-point
/// helpers are built only from integer draws and IEEE arithmetic (no <random>
/// distributions, whose algorithms are implementation-defined).
///
/// Reference values: Rng(0).next_u64() == 0x99ec5f36cb75f2b4,
/// Rng(42).next_u64() == 0x15780b2e0c2ec716.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n), unbiased (rejection sampling). n > 0.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller; the spare value is cached.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    /// Derive an independent child stream (e.g. one per utterance).
    Rng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T> &items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t &state);

} // namespace lstmkd
