#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/mixed_strategy.hpp"
#include "tspsro/nn.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/tsp.hpp"

namespace tspsro {

constexpr int kFeatureDim = 5;
constexpr int kSolverHiddenDim = 16;

// Construction state of a partially built tour. The start city is fixed at
// order[0]; `visited` mirrors `order` membership.
struct PartialState {
    std::vector<char> visited;
    std::vector<int> order;

    static PartialState initial(int n, int start = 0) {
        PartialState s;
        s.visited.assign(static_cast<std::size_t>(n), 0);
        s.visited[static_cast<std::size_t>(start)] = 1;
        s.order.push_back(start);
        return s;
    }
    int n() const { return static_cast<int>(visited.size()); }
    int current() const { return order.back(); }
    int start() const { return order.front(); }
    int remaining() const { return n() - static_cast<int>(order.size()); }
    bool is_visited(int city) const { return visited[static_cast<std::size_t>(city)] != 0; }
    void visit(int city) {
        visited[static_cast<std::size_t>(city)] = 1;
        order.push_back(city);
    }
};

// Constructive solver: a per-candidate scoring net (5 -> 16 relu -> 1)
// turned into a step distribution by a temperature softmax.
struct SolverPolicy {
    DenseNet net;
    double temperature = 1.0;
    int id = -1;
};

inline SolverPolicy make_solver_policy(Rng& rng, double temperature = 1.0, int id = -1) {
    if (!(temperature > 0.0)) throw InvalidParameter("make_solver_policy: temperature must be positive");
    SolverPolicy p;
    p.net = make_net({kFeatureDim, kSolverHiddenDim, 1},
                     {Activation::relu, Activation::identity}, rng);
    p.temperature = temperature;
    p.id = id;
    return p;
}

// Per-candidate geometric features, all computed on normalized coordinates:
//   [0] distance(current -> candidate)
//   [1] distance(candidate -> start)
//   [2] fraction of cities still unvisited (candidate included)
//   [3] candidate's mean distance to the other unvisited cities (0 if none)
//   [4] rank of [0] among unvisited candidates, normalized to [0,1]
//       (0-based rank / (k-1); 0 when the candidate stands alone)
inline std::array<double, kFeatureDim> candidate_features(const Instance& inst,
                                                          const PartialState& state,
                                                          int candidate) {
    if (state.is_visited(candidate)) {
        throw InvalidCandidate("candidate_features: city " + std::to_string(candidate) +
                               " already visited");
    }
    const int n = inst.n();
    const int current = state.current();
    const int start = state.start();
    const auto& pts = inst.points;

    std::array<double, kFeatureDim> f{};
    const double d_cur = distance(pts[static_cast<std::size_t>(current)],
                                  pts[static_cast<std::size_t>(candidate)]);
    f[0] = d_cur;
    f[1] = distance(pts[static_cast<std::size_t>(candidate)], pts[static_cast<std::size_t>(start)]);
    f[2] = static_cast<double>(state.remaining()) / static_cast<double>(n);

    double mean_dist = 0.0;
    int others = 0;
    int rank = 0;
    int unvisited = 0;
    for (int j = 0; j < n; ++j) {
        if (state.is_visited(j)) continue;
        ++unvisited;
        if (j == candidate) continue;
        ++others;
        mean_dist += distance(pts[static_cast<std::size_t>(candidate)], pts[static_cast<std::size_t>(j)]);
        const double dj = distance(pts[static_cast<std::size_t>(current)], pts[static_cast<std::size_t>(j)]);
        if (dj < d_cur || (dj == d_cur && j < candidate)) ++rank;
    }
    f[3] = others > 0 ? mean_dist / static_cast<double>(others) : 0.0;
    f[4] = unvisited > 1 ? static_cast<double>(rank) / static_cast<double>(unvisited - 1) : 0.0;
    return f;
}

// Probability vector over ALL cities: softmax(score/temperature) restricted
// to unvisited cities, exact zeros on visited ones.
inline std::vector<double> step_distribution(const SolverPolicy& policy, const Instance& inst,
                                             const PartialState& state) {
    const int n = inst.n();
    if (state.remaining() == 0) throw StateExhausted("step_distribution: no unvisited city");
    std::vector<int> candidates;
    std::vector<double> logits;
    candidates.reserve(static_cast<std::size_t>(state.remaining()));
    for (int j = 0; j < n; ++j) {
        if (state.is_visited(j)) continue;
        const auto f = candidate_features(inst, state, j);
        const std::vector<double> in(f.begin(), f.end());
        const double score = forward(policy.net, in)[0];
        candidates.push_back(j);
        logits.push_back(score / policy.temperature);
    }
    const std::vector<double> p = softmax(logits);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        out[static_cast<std::size_t>(candidates[k])] = p[k];
    }
    return out;
}

// One sampled construction trajectory.
struct RolloutRecord {
    Tour tour;
    std::vector<double> step_log_probs;  // n-1 entries, each <= 0
    double total_length = 0.0;
};

inline RolloutRecord rollout(const SolverPolicy& policy, const Instance& inst, Rng& rng) {
    const int n = inst.n();
    check_instance_size(n);
    PartialState state = PartialState::initial(n);
    RolloutRecord rec;
    rec.step_log_probs.reserve(static_cast<std::size_t>(n) - 1);
    for (int step = 1; step < n; ++step) {
        const std::vector<double> p = step_distribution(policy, inst, state);
        const int city = static_cast<int>(rng.categorical(p));
        rec.step_log_probs.push_back(std::log(p[static_cast<std::size_t>(city)]));
        state.visit(city);
    }
    rec.tour.order = std::move(state.order);
    rec.total_length = tour_length(inst, rec.tour);
    return rec;
}

// Deterministic argmax decoding; score ties go to the lowest city index.
inline Tour greedy_decode(const SolverPolicy& policy, const Instance& inst) {
    const int n = inst.n();
    check_instance_size(n);
    PartialState state = PartialState::initial(n);
    for (int step = 1; step < n; ++step) {
        const std::vector<double> p = step_distribution(policy, inst, state);
        int best = -1;
        double best_p = -1.0;
        for (int j = 0; j < n; ++j) {
            if (!state.is_visited(j) && p[static_cast<std::size_t>(j)] > best_p) {
                best_p = p[static_cast<std::size_t>(j)];
                best = j;
            }
        }
        state.visit(best);
    }
    Tour tour;
    tour.order = std::move(state.order);
    return tour;
}

inline double greedy_length(const SolverPolicy& policy, const Instance& inst) {
    return tour_length(inst, greedy_decode(policy, inst));
}

// Log-probability of following a given tour under the policy, recomputed
// from scratch (tour must start at city 0).
inline double trajectory_log_prob(const SolverPolicy& policy, const Instance& inst, const Tour& tour) {
    const int n = inst.n();
    if (!is_permutation_tour(tour, n) || tour.order[0] != 0) {
        throw SizeMismatch("trajectory_log_prob: tour is not a size-n permutation starting at 0");
    }
    PartialState state = PartialState::initial(n);
    double total = 0.0;
    for (int step = 1; step < n; ++step) {
        const std::vector<double> p = step_distribution(policy, inst, state);
        const int city = tour.order[static_cast<std::size_t>(step)];
        total += std::log(p[static_cast<std::size_t>(city)]);
        state.visit(city);
    }
    return total;
}

// Gradient of trajectory_log_prob w.r.t. the scoring-net parameters,
// accumulated into `grads` with weight `scale`. For each step the softmax
// over candidate logits s_c/T gives d log p(chosen)/d s_c =
// (1[c=chosen] - p_c)/T, which is then pushed through each candidate's
// forward pass.
inline void trajectory_log_prob_gradient(const SolverPolicy& policy, const Instance& inst,
                                         const Tour& tour, NetGrads& grads, double scale = 1.0) {
    const int n = inst.n();
    if (!is_permutation_tour(tour, n) || tour.order[0] != 0) {
        throw SizeMismatch("trajectory_log_prob_gradient: tour is not a size-n permutation starting at 0");
    }
    PartialState state = PartialState::initial(n);
    for (int step = 1; step < n; ++step) {
        std::vector<int> candidates;
        std::vector<double> logits;
        std::vector<ForwardCache> caches;
        for (int j = 0; j < n; ++j) {
            if (state.is_visited(j)) continue;
            const auto f = candidate_features(inst, state, j);
            const std::vector<double> in(f.begin(), f.end());
            ForwardCache cache;
            const double score = forward(policy.net, in, &cache)[0];
            candidates.push_back(j);
            logits.push_back(score / policy.temperature);
            caches.push_back(std::move(cache));
        }
        const std::vector<double> p = softmax(logits);
        const int chosen = tour.order[static_cast<std::size_t>(step)];
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const double indicator = candidates[k] == chosen ? 1.0 : 0.0;
            const double dscore = scale * (indicator - p[k]) / policy.temperature;
            if (dscore != 0.0) backward(policy.net, caches[k], {dscore}, grads);
        }
        state.visit(chosen);
    }
}

struct SolverGradResult {
    NetGrads grads;        // estimator of d E[tour length] / d theta
    double mean_length = 0.0;
};

// Score-function estimator of the expected-length gradient over a batch:
// mean of (length - baseline) * grad log pi, baseline = batch mean length.
// Rollouts are sampled here; instances must be normalized.
inline SolverGradResult solver_loss_gradient(const SolverPolicy& policy,
                                             const std::vector<Instance>& batch, Rng& rng) {
    if (batch.empty()) throw InvalidParameter("solver_loss_gradient: empty batch");
    std::vector<RolloutRecord> rollouts;
    rollouts.reserve(batch.size());
    double mean = 0.0;
    for (const Instance& inst : batch) {
        rollouts.push_back(rollout(policy, inst, rng));
        mean += rollouts.back().total_length;
    }
    mean /= static_cast<double>(batch.size());

    SolverGradResult result;
    result.grads = zero_grads(policy.net);
    result.mean_length = mean;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double advantage = rollouts[i].total_length - mean;
        if (advantage == 0.0) continue;
        trajectory_log_prob_gradient(policy, batch[i], rollouts[i].tour, result.grads,
                                     inv * advantage);
    }
    return result;
}

// Nash-weighted solver mixture.
struct MixedSolver {
    std::vector<SolverPolicy> members;
    std::vector<double> weights;
};

inline void validate_mixed_solver(const MixedSolver& mixed) {
    if (mixed.members.empty()) throw InvalidWeights("validate_mixed_solver: no members");
    if (mixed.members.size() != mixed.weights.size()) {
        throw InvalidWeights("validate_mixed_solver: member/weight count mismatch");
    }
    validate_simplex(mixed.weights, 1e-9, "validate_mixed_solver");
}

// Policy-level mixing: pi_mix(a|s) = sum_i w_i pi_i(a|s).
inline std::vector<double> mix_step_distribution(const MixedSolver& mixed, const Instance& inst,
                                                 const PartialState& state) {
    validate_mixed_solver(mixed);
    std::vector<double> out(static_cast<std::size_t>(inst.n()), 0.0);
    for (std::size_t i = 0; i < mixed.members.size(); ++i) {
        if (mixed.weights[i] == 0.0) continue;
        const std::vector<double> p = step_distribution(mixed.members[i], inst, state);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += mixed.weights[i] * p[j];
    }
    return out;
}

// Value-level mixing: elementwise weighted sum of per-action score tables.
inline std::vector<double> mix_value_tables(const std::vector<std::vector<double>>& tables,
                                            const std::vector<double>& weights) {
    if (tables.empty()) throw ShapeError("mix_value_tables: no tables");
    if (tables.size() != weights.size()) throw ShapeError("mix_value_tables: table/weight count mismatch");
    validate_simplex(weights, 1e-9, "mix_value_tables");
    const std::size_t len = tables.front().size();
    std::vector<double> out(len, 0.0);
    for (std::size_t i = 0; i < tables.size(); ++i) {
        if (tables[i].size() != len) throw ShapeError("mix_value_tables: table length mismatch");
        for (std::size_t j = 0; j < len; ++j) out[j] += weights[i] * tables[i][j];
    }
    return out;
}

// Greedy decoding of the policy-mixed distribution, ties to lowest index.
inline Tour mixed_greedy_decode(const MixedSolver& mixed, const Instance& inst) {
    validate_mixed_solver(mixed);
    const int n = inst.n();
    check_instance_size(n);
    PartialState state = PartialState::initial(n);
    for (int step = 1; step < n; ++step) {
        const std::vector<double> p = mix_step_distribution(mixed, inst, state);
        int best = -1;
        double best_p = -1.0;
        for (int j = 0; j < n; ++j) {
            if (!state.is_visited(j) && p[static_cast<std::size_t>(j)] > best_p) {
                best_p = p[static_cast<std::size_t>(j)];
                best = j;
            }
        }
        state.visit(best);
    }
    Tour tour;
    tour.order = std::move(state.order);
    return tour;
}

}  // namespace tspsro
