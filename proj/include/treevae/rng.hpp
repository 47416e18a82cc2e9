// Seeded randomness. All stochastic behaviour in the project flows through
// Rng instances derived from a single run seed via named substreams, so that
// changing how one component consumes randomness does not perturb the others.
//
// Distribution functions are implemented by hand (rather than <random>'s
// distribution templates) because the standard leaves their algorithms
// implementation-defined and we require byte-identical artifacts for a seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace treevae::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive a substream seed from a root seed, a stream name, and an index.
inline std::uint64_t derive(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ hash_name(stream)) ^ index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * span;
        return lo + static_cast<std::int64_t>(m >> 64);
    }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::vector<double> normal_vec(int n) {
        std::vector<double> out(static_cast<size_t>(n));
        for (auto& v : out) v = normal();
        return out;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

inline Rng substream(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
    return Rng(derive(seed, stream, index));
}

}  // namespace treevae::rng
