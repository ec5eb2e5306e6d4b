#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/rng.hpp"

namespace tspsro {

// Probability vector over one population (strategies or policies).
struct MixedStrategy {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
};

// Simplex membership: non-negative entries summing to 1 within `tol`.
inline void validate_simplex(const std::vector<double>& p, double tol = 1e-9,
                             const char* where = "validate_simplex") {
    if (p.empty()) throw InvalidWeights(std::string(where) + ": empty weight vector");
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < -tol) {
            throw InvalidWeights(std::string(where) + ": negative or non-finite weight");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
        throw InvalidWeights(std::string(where) + ": weights sum to " + std::to_string(sum));
    }
}

inline MixedStrategy uniform_strategy(std::size_t n) {
    if (n == 0) throw InvalidWeights("uniform_strategy: empty population");
    MixedStrategy s;
    s.probs.assign(n, 1.0 / static_cast<double>(n));
    return s;
}

inline int sample_index(const MixedStrategy& s, Rng& rng) {
    validate_simplex(s.probs, 1e-9, "sample_index");
    return static_cast<int>(rng.categorical(s.probs));
}

}  // namespace tspsro
