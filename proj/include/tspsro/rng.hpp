#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tspsro/errors.hpp"

namespace tspsro {

// All randomness in the library flows through Rng. The samplers below are
// pinned implementations (not the standard-library distributions, whose
// byte streams are implementation defined), so a master seed reproduces
// every run bit-exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InvalidParameter("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller (cosine branch only, two draws per value).
    double normal01() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal01(); }

    // Index sampled from an (unnormalized is rejected) probability vector.
    std::size_t categorical(const std::vector<double>& probs) {
        if (probs.empty()) throw ShapeError("Rng::categorical: empty probability vector");
        const double u = uniform01();
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) return i;
        }
        // Round-off may leave cum slightly below 1; fall back to the last
        // index carrying mass.
        for (std::size_t i = probs.size(); i-- > 0;) {
            if (probs[i] > 0.0) return i;
        }
        return probs.size() - 1;
    }

private:
    std::mt19937_64 engine_;
};

namespace detail {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic seed for a named substream of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = detail::mix64(master);
    s = detail::mix64(s ^ detail::mix64(a + 0x517cc1b727220a95ULL));
    s = detail::mix64(s ^ detail::mix64(b + 0x2545f4914f6cdd1dULL));
    s = detail::mix64(s ^ detail::mix64(c + 0x6c62272e07bb0142ULL));
    return s;
}

}  // namespace tspsro
