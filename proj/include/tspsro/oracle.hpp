#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/tsp.hpp"

namespace tspsro {

// Result of a ground-truth or heuristic tour computation. `exact` is true
// only for the exhaustive and dynamic-programming solvers.
struct OracleResult {
    double length = 0.0;
    Tour tour;
    bool exact = false;
};

namespace detail {

inline std::vector<double> distance_matrix(const Instance& inst) {
    const int n = inst.n();
    std::vector<double> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dist = distance(inst.points[static_cast<std::size_t>(i)],
                                         inst.points[static_cast<std::size_t>(j)]);
            d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = dist;
            d[static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = dist;
        }
    }
    return d;
}

// Rotates city 0 to the front and fixes the orientation so the second entry
// is smaller than the last. Cycles equal up to rotation/reflection end up
// bit-identical, so re-measuring them sums distances in the same order and
// different solvers report the same floating-point length for the same tour.
inline void canonicalize_cycle(Tour& tour) {
    std::vector<int>& t = tour.order;
    const auto zero = std::find(t.begin(), t.end(), 0);
    std::rotate(t.begin(), zero, t.end());
    if (t.size() > 2 && t[1] > t.back()) std::reverse(t.begin() + 1, t.end());
}

}  // namespace detail

// Exhaustive minimum over all (n-1)!/2 distinct cycles. City 0 is pinned
// first and orientation is fixed by requiring the second city's index to be
// below the last city's, which halves the permutations.
inline OracleResult brute_force(const Instance& inst) {
    const int n = inst.n();
    check_instance_size(n);
    if (n > 10) throw TooLarge("brute_force: n = " + std::to_string(n) + " exceeds 10");
    const std::vector<double> d = detail::distance_matrix(inst);
    auto dist = [&](int i, int j) {
        return d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
    };

    std::vector<int> perm(static_cast<std::size_t>(n) - 1);
    std::iota(perm.begin(), perm.end(), 1);
    std::vector<int> best;
    double best_len = std::numeric_limits<double>::infinity();
    do {
        if (n > 3 && perm.front() > perm.back()) continue;  // skip mirrored cycles
        double len = dist(0, perm.front());
        for (std::size_t i = 0; i + 1 < perm.size(); ++i) len += dist(perm[i], perm[i + 1]);
        len += dist(perm.back(), 0);
        if (len < best_len) {
            best_len = len;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Tour tour;
    tour.order.push_back(0);
    tour.order.insert(tour.order.end(), best.begin(), best.end());
    detail::canonicalize_cycle(tour);
    const double len = tour_length(inst, tour);
    return {len, std::move(tour), true};
}

// Held-Karp bitmask dynamic program, O(n^2 2^n). City 0 is the fixed start;
// masks range over cities 1..n-1. Ties prefer the lowest-index predecessor,
// which makes the reconstructed tour deterministic.
inline OracleResult held_karp(const Instance& inst) {
    const int n = inst.n();
    check_instance_size(n);
    if (n > 18) throw TooLarge("held_karp: n = " + std::to_string(n) + " exceeds 18");
    const std::vector<double> d = detail::distance_matrix(inst);
    auto dist = [&](int i, int j) {
        return d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
    };

    const int m = n - 1;  // cities 1..n-1, bit i-1 for city i
    const std::size_t n_masks = std::size_t{1} << m;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(n_masks * static_cast<std::size_t>(m), inf);
    std::vector<std::int16_t> parent(n_masks * static_cast<std::size_t>(m), -1);
    auto at = [m](std::size_t mask, int last) { return mask * static_cast<std::size_t>(m) + static_cast<std::size_t>(last); };

    for (int last = 0; last < m; ++last) {
        dp[at(std::size_t{1} << last, last)] = dist(0, last + 1);
    }
    for (std::size_t mask = 1; mask < n_masks; ++mask) {
        for (int last = 0; last < m; ++last) {
            if (!(mask & (std::size_t{1} << last))) continue;
            const double base = dp[at(mask, last)];
            if (base == inf) continue;
            for (int next = 0; next < m; ++next) {
                if (mask & (std::size_t{1} << next)) continue;
                const std::size_t nmask = mask | (std::size_t{1} << next);
                const double cand = base + dist(last + 1, next + 1);
                if (cand < dp[at(nmask, next)]) {
                    dp[at(nmask, next)] = cand;
                    parent[at(nmask, next)] = static_cast<std::int16_t>(last);
                }
            }
        }
    }

    const std::size_t full = n_masks - 1;
    double best_len = inf;
    int best_last = -1;
    for (int last = 0; last < m; ++last) {
        const double cand = dp[at(full, last)] + dist(last + 1, 0);
        if (cand < best_len) {
            best_len = cand;
            best_last = last;
        }
    }

    Tour tour;
    tour.order.resize(static_cast<std::size_t>(n));
    std::size_t mask = full;
    int last = best_last;
    for (int pos = n - 1; pos >= 1; --pos) {
        tour.order[static_cast<std::size_t>(pos)] = last + 1;
        const int prev = parent[at(mask, last)];
        mask &= ~(std::size_t{1} << last);
        last = prev;
    }
    tour.order[0] = 0;
    detail::canonicalize_cycle(tour);
    const double len = tour_length(inst, tour);
    return {len, std::move(tour), true};
}

namespace detail {

inline Tour nearest_neighbor_tour(const Instance& inst, const std::vector<double>& d, int start) {
    const int n = inst.n();
    auto dist = [&](int i, int j) {
        return d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
    };
    std::vector<char> visited(static_cast<std::size_t>(n), 0);
    Tour tour;
    tour.order.reserve(static_cast<std::size_t>(n));
    int current = start;
    tour.order.push_back(current);
    visited[static_cast<std::size_t>(current)] = 1;
    for (int step = 1; step < n; ++step) {
        int nearest = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int next = 0; next < n; ++next) {
            if (!visited[static_cast<std::size_t>(next)] && dist(current, next) < best) {
                best = dist(current, next);
                nearest = next;
            }
        }
        visited[static_cast<std::size_t>(nearest)] = 1;
        tour.order.push_back(nearest);
        current = nearest;
    }
    return tour;
}

// Repeatedly applies the best-improvement 2-exchange until the tour is
// 2-opt stable. Mutates `tour` in place and returns its final length.
inline double two_opt_improve(const Instance& inst, const std::vector<double>& d, Tour& tour) {
    const int n = inst.n();
    auto dist = [&](int i, int j) {
        return d[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
    };
    std::vector<int>& t = tour.order;
    bool improved = true;
    while (improved) {
        improved = false;
        for (int i = 0; i < n - 1; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;  // same edge pair
                const int a = t[static_cast<std::size_t>(i)];
                const int b = t[static_cast<std::size_t>((i + 1) % n)];
                const int c = t[static_cast<std::size_t>(j)];
                const int e = t[static_cast<std::size_t>((j + 1) % n)];
                const double delta = dist(a, c) + dist(b, e) - dist(a, b) - dist(c, e);
                if (delta < -1e-12) {
                    std::reverse(t.begin() + i + 1, t.begin() + j + 1);
                    improved = true;
                }
            }
        }
    }
    double len = 0.0;
    for (int i = 0; i < n; ++i) {
        len += dist(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>((i + 1) % n)]);
    }
    return len;
}

}  // namespace detail

// Heuristic stand-in for an exact solver above the Held-Karp size bound:
// best tour over `restarts` nearest-neighbor constructions (random start
// city each) improved to a 2-opt local optimum.
inline OracleResult local_search_2opt(const Instance& inst, int restarts, Rng& rng) {
    const int n = inst.n();
    if (n < 4) throw InvalidScale("local_search_2opt: needs n >= 4, got " + std::to_string(n));
    if (restarts < 1) throw InvalidParameter("local_search_2opt: restarts must be positive");
    const std::vector<double> d = detail::distance_matrix(inst);
    OracleResult best;
    best.length = std::numeric_limits<double>::infinity();
    best.exact = false;
    for (int r = 0; r < restarts; ++r) {
        const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        Tour tour = detail::nearest_neighbor_tour(inst, d, start);
        const double len = detail::two_opt_improve(inst, d, tour);
        if (len < best.length) {
            best.length = len;
            best.tour = std::move(tour);
        }
    }
    detail::canonicalize_cycle(best.tour);
    best.length = tour_length(inst, best.tour);
    return best;
}

// Relative optimality gap (solver - oracle) / oracle. Negative values are
// possible only when the oracle itself is heuristic.
inline double optimality_gap(double solver_len, double oracle_len) {
    if (!(oracle_len > 0.0)) {
        throw InvalidOracleValue("optimality_gap: oracle length must be positive, got " +
                                 std::to_string(oracle_len));
    }
    return (solver_len - oracle_len) / oracle_len;
}

struct OracleConfig {
    int exact_threshold = 18;  // use held_karp up to this size
    int restarts = 10;
    std::uint64_t heuristic_seed = 0x2f0c9e3779b97f4aULL;
};

// Dispatch: exact dynamic programming when the instance is small enough,
// seeded 2-opt otherwise.
inline OracleResult oracle_for(const Instance& inst, const OracleConfig& config = {}) {
    if (inst.n() <= config.exact_threshold) return held_karp(inst);
    Rng rng(derive_seed(config.heuristic_seed, static_cast<std::uint64_t>(inst.n())));
    return local_search_2opt(inst, config.restarts, rng);
}

}  // namespace tspsro
