#pragma once

#include <cstdint>
#include <random>

namespace rlrds {

/// SplitMix64 finalizer. Used for seed derivation and per-pair hashing.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based child seed: deterministic, independent of call order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(master, a), b);
}

/// Uniform in [0,1) from 53 high bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Stateless uniform keyed by (seed, i, j). Used for independent edge draws.
constexpr double hash_uniform(std::uint64_t seed, std::uint64_t i, std::uint64_t j) {
    return to_unit(splitmix64(seed ^ splitmix64((i << 32) ^ j ^ 0x2545f4914f6cdd1dULL)));
}

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    std::uint64_t next() { return engine_(); }
    double uniform() { return to_unit(engine_()); }
    double normal() { return normal_(engine_); }
    /// Exponential with rate 1.
    double exponential();
    /// Uniform integer in [0, n).
    int uniform_int(int n);
    bool bernoulli(double p) { return uniform() < p; }

    /// Independent stream derived from the next engine output.
    Rng split() { return Rng(next()); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rlrds
