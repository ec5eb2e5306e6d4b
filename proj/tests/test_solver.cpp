#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "helpers.hpp"
#include "tspsro/errors.hpp"
#include "tspsro/nn.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/solver.hpp"
#include "tspsro/tsp.hpp"

using namespace tspsro;

namespace {

Instance unit_square_instance() {
    Instance inst;
    inst.points = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
    return inst;
}

SolverPolicy zero_policy(double temperature = 1.0) {
    Rng rng(1);
    SolverPolicy p = make_solver_policy(rng, temperature);
    std::vector<double> flat = flatten_params(p.net);
    std::fill(flat.begin(), flat.end(), 0.0);
    set_params(p.net, flat);
    return p;
}

}  // namespace

TEST_CASE("candidate features match hand computation on the unit square") {
    const Instance inst = unit_square_instance();
    PartialState state = PartialState::initial(4);
    const double rt2 = std::sqrt(2.0);

    // From city 0 with {1,2,3} unvisited.
    const auto f1 = candidate_features(inst, state, 1);
    CHECK(f1[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(f1[1] == Catch::Approx(1.0).margin(1e-12));
    CHECK(f1[2] == Catch::Approx(0.75).margin(1e-12));
    CHECK(f1[3] == Catch::Approx((1.0 + rt2) / 2.0).margin(1e-12));
    // Cities 1 and 3 are equidistant from 0; the tie goes to the lower index,
    // so city 1 ranks first (0) and city 3 second.
    CHECK(f1[4] == Catch::Approx(0.0).margin(1e-12));

    const auto f3 = candidate_features(inst, state, 3);
    CHECK(f3[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(f3[4] == Catch::Approx(0.5).margin(1e-12));

    const auto f2 = candidate_features(inst, state, 2);
    CHECK(f2[0] == Catch::Approx(rt2).margin(1e-12));
    CHECK(f2[1] == Catch::Approx(rt2).margin(1e-12));
    CHECK(f2[3] == Catch::Approx(1.0).margin(1e-12));
    CHECK(f2[4] == Catch::Approx(1.0).margin(1e-12));

    // After visiting 1: current=1, unvisited {2,3}.
    state.visit(1);
    const auto g2 = candidate_features(inst, state, 2);
    CHECK(g2[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(g2[1] == Catch::Approx(rt2).margin(1e-12));
    CHECK(g2[2] == Catch::Approx(0.5).margin(1e-12));
    CHECK(g2[3] == Catch::Approx(1.0).margin(1e-12));
    CHECK(g2[4] == Catch::Approx(0.0).margin(1e-12));

    // Last remaining candidate: mean-distance and rank features fall back to 0.
    state.visit(2);
    const auto h3 = candidate_features(inst, state, 3);
    CHECK(h3[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(h3[1] == Catch::Approx(1.0).margin(1e-12));
    CHECK(h3[2] == Catch::Approx(0.25).margin(1e-12));
    CHECK(h3[3] == 0.0);
    CHECK(h3[4] == 0.0);
}

TEST_CASE("candidate features reject a visited candidate") {
    const Instance inst = unit_square_instance();
    PartialState state = PartialState::initial(4);
    CHECK_THROWS_AS(candidate_features(inst, state, 0), InvalidCandidate);
    state.visit(2);
    CHECK_THROWS_AS(candidate_features(inst, state, 2), InvalidCandidate);
}

TEST_CASE("step distribution is a simplex with exact zeros on visited cities") {
    Rng rng(7);
    const Instance inst = generate_uniform(9, rng);
    SolverPolicy policy = make_solver_policy(rng);
    PartialState state = PartialState::initial(9);
    state.visit(4);
    state.visit(2);

    const std::vector<double> p = step_distribution(policy, inst, state);
    REQUIRE(p.size() == 9);
    CHECK(p[0] == 0.0);
    CHECK(p[4] == 0.0);
    CHECK(p[2] == 0.0);
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) {
        CHECK(p[static_cast<std::size_t>(j)] >= 0.0);
        sum += p[static_cast<std::size_t>(j)];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("temperature extremes flatten and sharpen the step distribution") {
    Rng rng(11);
    const Instance inst = generate_uniform(8, rng);
    SolverPolicy base = make_solver_policy(rng);
    PartialState state = PartialState::initial(8);

    SolverPolicy hot = base;
    hot.temperature = 1e6;
    const std::vector<double> ph = step_distribution(hot, inst, state);
    for (int j = 1; j < 8; ++j) {
        CHECK(ph[static_cast<std::size_t>(j)] == Catch::Approx(1.0 / 7.0).margin(1e-4));
    }

    SolverPolicy cold = base;
    cold.temperature = 1e-3;
    const std::vector<double> pc = step_distribution(cold, inst, state);
    const double top = *std::max_element(pc.begin(), pc.end());
    CHECK(top >= 0.99);
}

TEST_CASE("step distribution requires an unvisited city") {
    const Instance inst = unit_square_instance();
    SolverPolicy policy = zero_policy();
    PartialState state = PartialState::initial(4);
    state.visit(1);
    state.visit(2);
    state.visit(3);
    CHECK_THROWS_AS(step_distribution(policy, inst, state), StateExhausted);
}

TEST_CASE("rollout produces a valid tour with consistent bookkeeping") {
    Rng setup(13);
    const Instance inst = generate_uniform(8, setup);
    SolverPolicy policy = make_solver_policy(setup);

    Rng r1(42);
    const RolloutRecord rec = rollout(policy, inst, r1);
    REQUIRE(rec.tour.order.size() == 8);
    CHECK(rec.tour.order[0] == 0);
    CHECK(is_permutation_tour(rec.tour, 8));
    REQUIRE(rec.step_log_probs.size() == 7);
    for (double lp : rec.step_log_probs) CHECK(lp <= 0.0);
    CHECK(rec.total_length == tour_length(inst, rec.tour));

    Rng r2(42);
    const RolloutRecord rep = rollout(policy, inst, r2);
    CHECK(rep.tour.order == rec.tour.order);
    CHECK(rep.step_log_probs == rec.step_log_probs);

    // A different stream almost surely visits in a different order; verify at
    // least one of a handful of seeds diverges so sampling is actually live.
    bool diverged = false;
    for (unsigned long long s = 100; s < 105 && !diverged; ++s) {
        Rng r3(s);
        diverged = rollout(policy, inst, r3).tour.order != rec.tour.order;
    }
    CHECK(diverged);
}

TEST_CASE("greedy decode follows per-step argmax and breaks ties toward lower indices") {
    // All-zero parameters score every candidate identically, so every step is
    // a tie and the identity order must come out.
    const Instance square = unit_square_instance();
    const Tour tied = greedy_decode(zero_policy(), square);
    CHECK(tied.order == std::vector<int>{0, 1, 2, 3});

    Rng rng(17);
    const Instance inst = generate_uniform(10, rng);
    SolverPolicy policy = make_solver_policy(rng);
    const Tour tour = greedy_decode(policy, inst);
    CHECK(is_permutation_tour(tour, 10));

    // Replay the construction manually from step distributions.
    PartialState state = PartialState::initial(10);
    for (int step = 1; step < 10; ++step) {
        const std::vector<double> p = step_distribution(policy, inst, state);
        int best = -1;
        double best_p = -1.0;
        for (int j = 0; j < 10; ++j) {
            if (!state.is_visited(j) && p[static_cast<std::size_t>(j)] > best_p) {
                best_p = p[static_cast<std::size_t>(j)];
                best = j;
            }
        }
        CHECK(tour.order[static_cast<std::size_t>(step)] == best);
        state.visit(best);
    }

    CHECK(greedy_length(policy, inst) == tour_length(inst, tour));
}

TEST_CASE("trajectory log prob recomputes the rollout exactly and validates input") {
    Rng setup(19);
    const Instance inst = generate_uniform(7, setup);
    SolverPolicy policy = make_solver_policy(setup);

    Rng r(23);
    const RolloutRecord rec = rollout(policy, inst, r);
    double total = 0.0;
    for (double lp : rec.step_log_probs) total += lp;
    CHECK(trajectory_log_prob(policy, inst, rec.tour) == Catch::Approx(total).margin(1e-12));

    Tour rotated = rec.tour;
    std::rotate(rotated.order.begin(), rotated.order.begin() + 1, rotated.order.end());
    if (rotated.order[0] != 0) {
        CHECK_THROWS_AS(trajectory_log_prob(policy, inst, rotated), SizeMismatch);
    }
    Tour short_tour;
    short_tour.order = {0, 1, 2};
    CHECK_THROWS_AS(trajectory_log_prob(policy, inst, short_tour), SizeMismatch);
}

TEST_CASE("trajectory log prob gradient passes finite differences") {
    // Seed chosen so no hidden-unit pre-activation sits within the finite
    // difference step of its kink; relu is non-differentiable there and any
    // seed landing on a kink measures the subgradient mismatch, not a bug.
    Rng setup(60);
    SolverPolicy policy = make_solver_policy(setup, 0.7);
    std::vector<Instance> instances;
    std::vector<Tour> tours;
    std::vector<double> advantages = {0.8, -1.3, 0.5};
    Rng sampler(62);
    for (int k = 0; k < 3; ++k) {
        instances.push_back(generate_uniform(6, setup));
        tours.push_back(rollout(policy, instances.back(), sampler).tour);
    }

    // Analytic gradient of f(theta) = sum_k adv_k * log pi_theta(tour_k).
    NetGrads grads = zero_grads(policy.net);
    for (int k = 0; k < 3; ++k) {
        trajectory_log_prob_gradient(policy, instances[static_cast<std::size_t>(k)],
                                     tours[static_cast<std::size_t>(k)], grads,
                                     advantages[static_cast<std::size_t>(k)]);
    }
    const std::vector<double> analytic = flatten_grads(grads);

    std::vector<double> params = flatten_params(policy.net);
    auto f = [&]() {
        SolverPolicy probe = policy;
        set_params(probe.net, params);
        double total = 0.0;
        for (int k = 0; k < 3; ++k) {
            total += advantages[static_cast<std::size_t>(k)] *
                     trajectory_log_prob(probe, instances[static_cast<std::size_t>(k)],
                                         tours[static_cast<std::size_t>(k)]);
        }
        return total;
    };
    const double worst = testutil::max_grad_rel_err(f, params, analytic, 1e-6);
    CHECK(worst < 1e-4);
}

TEST_CASE("single-rollout batches produce zero advantage gradients") {
    Rng rng(37);
    const Instance inst = generate_uniform(8, rng);
    SolverPolicy policy = make_solver_policy(rng);

    const SolverGradResult res = solver_loss_gradient(policy, {inst}, rng);
    CHECK(res.mean_length > 0.0);
    for (double g : flatten_grads(res.grads)) CHECK(g == 0.0);

    CHECK_THROWS_AS(solver_loss_gradient(policy, {}, rng), InvalidParameter);
}

TEST_CASE("multi-instance batches center advantages at the batch mean") {
    Rng rng(41);
    std::vector<Instance> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(generate_uniform(7, rng));
    SolverPolicy policy = make_solver_policy(rng);

    // Replaying with an identically seeded stream must reproduce both the
    // mean length and the gradient bit for bit.
    Rng r1(53);
    Rng r2(53);
    const SolverGradResult a = solver_loss_gradient(policy, batch, r1);
    const SolverGradResult b = solver_loss_gradient(policy, batch, r2);
    CHECK(a.mean_length == b.mean_length);
    CHECK(flatten_grads(a.grads) == flatten_grads(b.grads));

    // And the mean matches the average of the same four replayed rollouts.
    Rng r3(53);
    double mean = 0.0;
    for (const Instance& inst : batch) mean += rollout(policy, inst, r3).total_length;
    mean /= 4.0;
    CHECK(a.mean_length == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("mixed step distribution is the weighted member average") {
    Rng rng(43);
    const Instance inst = generate_uniform(6, rng);
    SolverPolicy a = make_solver_policy(rng);
    SolverPolicy b = make_solver_policy(rng, 0.5);
    PartialState state = PartialState::initial(6);
    state.visit(3);

    MixedSolver one_hot{{a, b}, {1.0, 0.0}};
    CHECK(mix_step_distribution(one_hot, inst, state) == step_distribution(a, inst, state));

    MixedSolver blend{{a, b}, {0.3, 0.7}};
    const std::vector<double> pa = step_distribution(a, inst, state);
    const std::vector<double> pb = step_distribution(b, inst, state);
    const std::vector<double> pm = mix_step_distribution(blend, inst, state);
    double sum = 0.0;
    for (std::size_t j = 0; j < pm.size(); ++j) {
        CHECK(pm[j] == Catch::Approx(0.3 * pa[j] + 0.7 * pb[j]).margin(1e-12));
        sum += pm[j];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));

    MixedSolver empty;
    CHECK_THROWS_AS(mix_step_distribution(empty, inst, state), InvalidWeights);
    MixedSolver mismatched{{a, b}, {1.0}};
    CHECK_THROWS_AS(mix_step_distribution(mismatched, inst, state), InvalidWeights);
    MixedSolver off_simplex{{a, b}, {0.6, 0.6}};
    CHECK_THROWS_AS(mix_step_distribution(off_simplex, inst, state), InvalidWeights);
}

TEST_CASE("one-hot mixtures decode exactly like their member") {
    Rng rng(47);
    const Instance inst = generate_uniform(9, rng);
    SolverPolicy a = make_solver_policy(rng);
    SolverPolicy b = make_solver_policy(rng);

    MixedSolver one_hot{{a, b}, {0.0, 1.0}};
    CHECK(mixed_greedy_decode(one_hot, inst).order == greedy_decode(b, inst).order);

    MixedSolver blend{{a, b}, {0.5, 0.5}};
    const Tour mixed = mixed_greedy_decode(blend, inst);
    CHECK(is_permutation_tour(mixed, 9));
    CHECK(mixed.order[0] == 0);
}

TEST_CASE("value-table mixing is an elementwise convex combination") {
    const std::vector<std::vector<double>> tables = {{1.0, 2.0, -1.0}, {3.0, 4.0, 0.0}};
    const std::vector<double> mixed = mix_value_tables(tables, {0.25, 0.75});
    REQUIRE(mixed.size() == 3);
    CHECK(mixed[0] == Catch::Approx(2.5).margin(1e-12));
    CHECK(mixed[1] == Catch::Approx(3.5).margin(1e-12));
    CHECK(mixed[2] == Catch::Approx(-0.25).margin(1e-12));

    CHECK_THROWS_AS(mix_value_tables({}, {}), ShapeError);
    CHECK_THROWS_AS(mix_value_tables(tables, {1.0}), ShapeError);
    CHECK_THROWS_AS(mix_value_tables({{1.0}, {1.0, 2.0}}, {0.5, 0.5}), ShapeError);
    CHECK_THROWS_AS(mix_value_tables(tables, {0.9, 0.9}), InvalidWeights);
}

TEST_CASE("solver policy factory builds the documented architecture") {
    Rng rng(59);
    const SolverPolicy p = make_solver_policy(rng, 1.5, 7);
    REQUIRE(p.net.layers.size() == 2);
    CHECK(p.net.layers[0].in_dim == kFeatureDim);
    CHECK(p.net.layers[0].out_dim == kSolverHiddenDim);
    CHECK(p.net.layers[0].act == Activation::relu);
    CHECK(p.net.layers[1].in_dim == kSolverHiddenDim);
    CHECK(p.net.layers[1].out_dim == 1);
    CHECK(p.net.layers[1].act == Activation::identity);
    CHECK(p.temperature == 1.5);
    CHECK(p.id == 7);

    CHECK_THROWS_AS(make_solver_policy(rng, 0.0), InvalidParameter);
    CHECK_THROWS_AS(make_solver_policy(rng, -1.0), InvalidParameter);
}
