#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "tspsro/oracle.hpp"
#include "tspsro/tsp.hpp"

using namespace tspsro;

namespace {

Instance unit_square() {
    Instance inst;
    inst.points = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
    return inst;
}

// True when no single 2-exchange shortens the tour.
bool two_opt_stable(const Instance& inst, const Tour& tour) {
    const int n = inst.n();
    const auto d = [&](int a, int b) {
        return distance(inst.points[static_cast<std::size_t>(tour.order[static_cast<std::size_t>(a % n)])],
                        inst.points[static_cast<std::size_t>(tour.order[static_cast<std::size_t>(b % n)])]);
    };
    for (int i = 0; i < n - 1; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            const double delta = d(i, j) + d(i + 1, j + 1) - d(i, i + 1) - d(j, j + 1);
            if (delta < -1e-9) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("brute force finds the square perimeter") {
    const OracleResult res = brute_force(unit_square());
    CHECK(res.length == Catch::Approx(4.0));
    CHECK(res.exact);
    CHECK(is_permutation_tour(res.tour, 4));
    CHECK(res.tour.order[0] == 0);
}

TEST_CASE("brute force rejects oversized instances") {
    Rng rng(1);
    const Instance inst = generate_uniform(11, rng);
    CHECK_THROWS_AS(brute_force(inst), TooLarge);
}

TEST_CASE("held-karp rejects oversized instances") {
    Rng rng(1);
    const Instance inst = generate_uniform(19, rng);
    CHECK_THROWS_AS(held_karp(inst), TooLarge);
}

TEST_CASE("held-karp matches brute force bit-exactly on random instances") {
    Rng rng(4242);
    for (int n = 4; n <= 9; ++n) {
        for (int rep = 0; rep < 8; ++rep) {
            const Instance inst = normalize(generate_uniform(n, rng));
            const OracleResult bf = brute_force(inst);
            const OracleResult hk = held_karp(inst);
            INFO("n=" << n << " rep=" << rep);
            CHECK(hk.length == bf.length);
            CHECK(hk.exact);
            CHECK(is_permutation_tour(hk.tour, n));
        }
    }
}

TEST_CASE("exact solvers return canonical tours") {
    Rng rng(55);
    const Instance inst = normalize(generate_uniform(7, rng));
    for (const OracleResult& res : {brute_force(inst), held_karp(inst)}) {
        CHECK(res.tour.order[0] == 0);
        CHECK(res.tour.order[1] < res.tour.order.back());
        CHECK(res.length == tour_length(inst, res.tour));
    }
}

TEST_CASE("two-opt result is feasible, stable, and above the optimum") {
    Rng master(808);
    for (int rep = 0; rep < 10; ++rep) {
        const Instance inst = normalize(generate_uniform(12, master));
        Rng rng(derive_seed(99, static_cast<std::uint64_t>(rep)));
        const OracleResult ls = local_search_2opt(inst, 5, rng);
        const OracleResult hk = held_karp(inst);
        CHECK(is_permutation_tour(ls.tour, 12));
        CHECK_FALSE(ls.exact);
        CHECK(ls.length >= hk.length - 1e-12);
        CHECK(ls.length == tour_length(inst, ls.tour));
        CHECK(two_opt_stable(inst, ls.tour));
    }
}

TEST_CASE("two-opt is deterministic for a fixed seed") {
    Rng master(9);
    const Instance inst = normalize(generate_uniform(20, master));
    Rng a(77), b(77);
    const OracleResult ra = local_search_2opt(inst, 10, a);
    const OracleResult rb = local_search_2opt(inst, 10, b);
    CHECK(ra.length == rb.length);
    CHECK(ra.tour.order == rb.tour.order);
}

TEST_CASE("two-opt validates its arguments") {
    Rng rng(3);
    const Instance small = generate_uniform(3, rng);
    Rng r1(1);
    CHECK_THROWS_AS(local_search_2opt(small, 5, r1), InvalidScale);
    const Instance ok = generate_uniform(6, rng);
    CHECK_THROWS_AS(local_search_2opt(ok, 0, r1), InvalidParameter);
}

TEST_CASE("optimality gap is the relative excess") {
    CHECK(optimality_gap(11.0, 10.0) == Catch::Approx(0.1));
    CHECK(optimality_gap(10.0, 10.0) == 0.0);
    CHECK_THROWS_AS(optimality_gap(1.0, 0.0), InvalidOracleValue);
    CHECK_THROWS_AS(optimality_gap(1.0, -2.0), InvalidOracleValue);
}

TEST_CASE("oracle dispatch is exact up to the threshold and heuristic above") {
    Rng rng(66);
    const Instance small = normalize(generate_uniform(10, rng));
    const OracleResult exact = oracle_for(small);
    CHECK(exact.exact);
    CHECK(exact.length == held_karp(small).length);

    const Instance large = normalize(generate_uniform(19, rng));
    const OracleResult heur = oracle_for(large);
    CHECK_FALSE(heur.exact);
    CHECK(is_permutation_tour(heur.tour, 19));

    OracleConfig tight;
    tight.exact_threshold = 5;
    const OracleResult forced = oracle_for(small, tight);
    CHECK_FALSE(forced.exact);
}

TEST_CASE("oracle dispatch is reproducible") {
    Rng rng(31);
    const Instance inst = normalize(generate_uniform(25, rng));
    const OracleResult a = oracle_for(inst);
    const OracleResult b = oracle_for(inst);
    CHECK(a.length == b.length);
    CHECK(a.tour.order == b.tour.order);
}

TEST_CASE("two-opt oracle comes close to the reference optimum on berlin52") {
    const Instance inst = parse_tsplib(testutil::berlin52_text());
    REQUIRE(inst.n() == 52);
    const OracleResult res = oracle_for(inst);  // 52 > exact threshold -> 2-opt
    CHECK_FALSE(res.exact);
    CHECK(is_permutation_tour(res.tour, 52));
    CHECK(res.length <= 1.10 * 7542.0);
    CHECK(res.length >= 7542.0 * 0.99);  // can't beat the optimum by more than rounding slack
}
