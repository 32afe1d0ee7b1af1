#pragma once

// Portable random draws. std::mt19937_64 has a bit-exact output sequence
// mandated by the standard; the distributions in <random> do not, so bounded
// integers and normals are derived here from raw engine output.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace csbg {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Unbiased integer in [0, bound) by rejection of the short tail.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t x = engine_();
            if (x >= threshold) return x % bound;
        }
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// First k entries of a Fisher-Yates shuffle of [0, n).
    std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k) {
        std::vector<std::uint32_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0u);
        for (std::uint32_t i = 0; i < k; ++i) {
            auto j = static_cast<std::uint32_t>(i + below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    std::vector<std::uint32_t> permutation(std::uint32_t n) { return sample_without_replacement(n, n); }

private:
    std::mt19937_64 engine_;
};

}  // namespace csbg
