#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/generator.hpp"
#include "tspsro/metagame.hpp"
#include "tspsro/mixed_strategy.hpp"
#include "tspsro/solver.hpp"
#include "tspsro/training.hpp"
#include "tspsro/tsp.hpp"

namespace tspsro {

enum class PsroMode { from_scratch, fine_tune };

inline std::string psro_mode_name(PsroMode m) {
    return m == PsroMode::from_scratch ? "from_scratch" : "fine_tune";
}

inline PsroMode psro_mode_from_name(const std::string& s) {
    if (s == "from_scratch") return PsroMode::from_scratch;
    if (s == "fine_tune") return PsroMode::fine_tune;
    throw ConfigError("psro_mode_from_name: unknown mode '" + s + "'");
}

struct PsroConfig {
    int iterations = 5;
    std::vector<int> support = {10, 12, 15};
    int M = 200;                      // samples per meta-table cell
    double lambda = kDefaultLambda;
    double support_threshold = 0.99;
    double temperature = 1.0;
    std::uint64_t master_seed = 1;
    PsroMode mode = PsroMode::from_scratch;
    int threads = 1;
    SolverTrainConfig solver;
    GeneratorTrainConfig generator;
};

inline void validate_psro_config(const PsroConfig& c) {
    if (c.iterations < 1) throw ConfigError("config: iterations must be >= 1");
    if (c.support.empty()) throw ConfigError("config: scale support must be non-empty");
    for (int n : c.support) {
        if (n < 3) throw ConfigError("config: scale " + std::to_string(n) + " below minimum 3");
    }
    if (c.M < 1) throw ConfigError("config: M must be >= 1");
    if (!(c.lambda > 0.0) || c.lambda > 1.0) throw ConfigError("config: lambda must be in (0, 1]");
    if (!(c.support_threshold > 0.0) || c.support_threshold > 1.0) {
        throw ConfigError("config: support_threshold must be in (0, 1]");
    }
    if (!(c.temperature > 0.0)) throw ConfigError("config: temperature must be positive");
    if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
    if (c.solver.epochs < 0 || c.generator.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (c.solver.batches_per_epoch < 1 || c.solver.batch_size < 1 || c.generator.batch_size < 1) {
        throw ConfigError("config: batch sizes must be positive");
    }
    if (!(c.solver.lr > 0.0) || !(c.generator.lr > 0.0)) throw ConfigError("config: learning rates must be positive");
    if (c.solver.validation_size < 1 || c.generator.eval_size < 1) {
        throw ConfigError("config: validation/eval sizes must be positive");
    }
}

struct IterationRecord {
    int iteration = 0;            // 1-based
    MixedStrategy sigma_ss;       // meta-strategy solved on this iteration's table
    MixedStrategy sigma_dg;
    double game_value = 0.0;
    double online_expl = 0.0;     // previous meta-strategy measured on this table
    double retro_expl = 0.0;      // this meta-strategy measured on the final table
    double sparsity = 0.0;        // max solver probability (logged, never asserted)
    int solver_selected_epoch = 0;
    int generator_selected_epoch = 0;
    std::vector<double> solver_val_gaps;
    std::vector<double> generator_eval_gaps;
};

struct PopulationCheckpoint {
    PsroConfig config;
    std::vector<SolverPolicy> solvers;
    std::vector<GeneratorPolicy> generators;
    MetaGame table;
    std::vector<IterationRecord> iterations;
    MixedStrategy final_sigma_ss;
    MixedStrategy final_sigma_dg;
    double final_value = 0.0;
    bool complete = false;
    std::string error;
};

inline MixedStrategy pad_strategy(const MixedStrategy& s, std::size_t n) {
    if (s.size() > n) throw InvalidWeights("pad_strategy: cannot shrink a strategy");
    MixedStrategy out = s;
    out.probs.resize(n, 0.0);
    return out;
}

// Population expansion loop: meta-solve, train both oracles against the
// mixture, append, refill the table, re-solve. Exploitability is recorded
// twice per iteration — online (previous strategy on the just-expanded
// table) and retrospectively (each strategy on the final table, filled in
// after the loop). Any failure yields a partial checkpoint with
// complete=false and the error message attached.
inline PopulationCheckpoint psro_run(
    const PsroConfig& config,
    const std::function<void(const IterationRecord&)>& on_iteration = {}) {
    validate_psro_config(config);
    PopulationCheckpoint cp;
    cp.config = config;
    const std::uint64_t table_master = derive_seed(config.master_seed, 0x7ab1eULL);
    try {
        Rng init_rng(derive_seed(config.master_seed, 0, 0, 0x1717ULL));
        cp.solvers.push_back(make_solver_policy(init_rng, config.temperature, 0));
        cp.generators.push_back(make_generator_identity(config.support, config.lambda, 0));
        cp.table = fill_meta_table(cp.solvers, cp.generators, MetaGame{}, config.M, table_master,
                                   config.threads, config.solver.oracle)
                       .game;
        NashSolution sigma_prev = solve_zero_sum(cp.table);

        for (int t = 1; t <= config.iterations; ++t) {
            // Solver oracle vs the generator mixture.
            Rng s_rng(derive_seed(config.master_seed, static_cast<std::uint64_t>(t), 1));
            SolverPolicy s_init = config.mode == PsroMode::fine_tune
                                      ? cp.solvers.back()
                                      : make_solver_policy(s_rng, config.temperature);
            s_init.id = t;
            SolverTrainResult st =
                train_solver_oracle(s_init, sigma_prev.sigma_dg, cp.generators, config.solver, s_rng);

            // Generator oracle vs the solver mixture (old population).
            Rng g_rng(derive_seed(config.master_seed, static_cast<std::uint64_t>(t), 2));
            GeneratorPolicy g_init = make_generator_random(config.support, g_rng, config.lambda, t);
            GeneratorTrainResult gt =
                train_generator_oracle(g_init, sigma_prev.sigma_ss, cp.solvers, config.generator, g_rng);

            cp.solvers.push_back(st.policy);
            cp.generators.push_back(gt.policy);
            cp.table = fill_meta_table(cp.solvers, cp.generators, cp.table, config.M, table_master,
                                       config.threads, config.solver.oracle)
                           .game;
            const NashSolution sigma_t = solve_zero_sum(cp.table);

            IterationRecord rec;
            rec.iteration = t;
            rec.sigma_ss = sigma_t.sigma_ss;
            rec.sigma_dg = sigma_t.sigma_dg;
            rec.game_value = sigma_t.value;
            rec.online_expl = exploitability(gap_matrix(cp.table),
                                             pad_strategy(sigma_prev.sigma_ss, cp.solvers.size()),
                                             pad_strategy(sigma_prev.sigma_dg, cp.generators.size()));
            rec.sparsity = *std::max_element(sigma_t.sigma_ss.probs.begin(), sigma_t.sigma_ss.probs.end());
            rec.solver_selected_epoch = st.selected_epoch;
            rec.generator_selected_epoch = gt.selected_epoch;
            rec.solver_val_gaps = st.epoch_val_gaps;
            rec.generator_eval_gaps = gt.epoch_eval_gaps;
            cp.iterations.push_back(rec);
            sigma_prev = sigma_t;
            if (on_iteration) on_iteration(cp.iterations.back());
        }

        const std::vector<std::vector<double>> U = gap_matrix(cp.table);
        for (IterationRecord& rec : cp.iterations) {
            rec.retro_expl = exploitability(U, pad_strategy(rec.sigma_ss, cp.solvers.size()),
                                            pad_strategy(rec.sigma_dg, cp.generators.size()));
        }
        cp.final_sigma_ss = cp.iterations.back().sigma_ss;
        cp.final_sigma_dg = cp.iterations.back().sigma_dg;
        cp.final_value = cp.iterations.back().game_value;
        cp.complete = true;
    } catch (const std::exception& e) {
        cp.complete = false;
        cp.error = e.what();
    }
    return cp;
}

// Minimal prefix of indices, by descending probability (ties to the lower
// index), whose cumulative mass reaches the threshold.
inline std::vector<int> select_support(const MixedStrategy& sigma, double threshold = 0.99) {
    validate_simplex(sigma.probs, 1e-9, "select_support");
    if (!(threshold > 0.0) || threshold > 1.0) {
        throw InvalidParameter("select_support: threshold must be in (0, 1]");
    }
    std::vector<int> order(sigma.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&sigma](int a, int b) {
        return sigma.probs[static_cast<std::size_t>(a)] > sigma.probs[static_cast<std::size_t>(b)];
    });
    std::vector<int> selected;
    double cum = 0.0;
    for (int idx : order) {
        selected.push_back(idx);
        cum += sigma.probs[static_cast<std::size_t>(idx)];
        if (cum >= threshold) break;
    }
    return selected;
}

// Nash-weighted mixture over the support of the final solver meta-strategy,
// weights renormalized over the selected members.
inline MixedSolver build_mixed_solver(const PopulationCheckpoint& cp, double threshold = 0.99) {
    if (!cp.complete) throw IncompleteCheckpoint("build_mixed_solver: checkpoint incomplete");
    const std::vector<int> support = select_support(cp.final_sigma_ss, threshold);
    MixedSolver mixed;
    double total = 0.0;
    for (int idx : support) total += cp.final_sigma_ss.probs[static_cast<std::size_t>(idx)];
    for (int idx : support) {
        mixed.members.push_back(cp.solvers[static_cast<std::size_t>(idx)]);
        mixed.weights.push_back(cp.final_sigma_ss.probs[static_cast<std::size_t>(idx)] / total);
    }
    return mixed;
}

struct GapStats {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Expected gap of a solver mixture on a fixed instance list: per instance,
// the weight-averaged gap over members (solver drawn from the mixture), then
// mean and standard error across instances.
inline GapStats expected_gap_on_instances(const std::vector<SolverPolicy>& members,
                                          const std::vector<double>& weights,
                                          const std::vector<Instance>& instances,
                                          const OracleConfig& oracle_config = {}) {
    if (instances.empty()) throw InvalidParameter("expected_gap_on_instances: empty dataset");
    if (members.empty() || members.size() != weights.size()) {
        throw InvalidWeights("expected_gap_on_instances: member/weight mismatch");
    }
    validate_simplex(weights, 1e-9, "expected_gap_on_instances");
    std::vector<double> gaps(instances.size(), 0.0);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const double oracle_len = oracle_for(instances[i], oracle_config).length;
        double gap = 0.0;
        for (std::size_t m = 0; m < members.size(); ++m) {
            if (weights[m] == 0.0) continue;
            gap += weights[m] * optimality_gap(greedy_length(members[m], instances[i]), oracle_len);
        }
        gaps[i] = gap;
    }
    GapStats stats;
    for (double g : gaps) stats.mean += g;
    stats.mean /= static_cast<double>(gaps.size());
    if (gaps.size() > 1) {
        double var = 0.0;
        for (double g : gaps) var += (g - stats.mean) * (g - stats.mean);
        stats.stderr_ = std::sqrt(var / static_cast<double>(gaps.size() - 1) /
                                  static_cast<double>(gaps.size()));
    }
    return stats;
}

struct GapRow {
    std::string variant;
    int k = 0;
    GapStats stats;
};

namespace detail {

// Top-k members of the final solver meta-strategy, weights renormalized.
inline MixedSolver topk_mixture(const PopulationCheckpoint& cp, int k) {
    std::vector<int> order(cp.final_sigma_ss.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&cp](int a, int b) {
        return cp.final_sigma_ss.probs[static_cast<std::size_t>(a)] >
               cp.final_sigma_ss.probs[static_cast<std::size_t>(b)];
    });
    MixedSolver mixed;
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += cp.final_sigma_ss.probs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    for (int i = 0; i < k; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        mixed.members.push_back(cp.solvers[static_cast<std::size_t>(idx)]);
        // An all-zero prefix can only happen with k below the support size
        // of a degenerate strategy; fall back to uniform weights then.
        mixed.weights.push_back(total > 0.0
                                    ? cp.final_sigma_ss.probs[static_cast<std::size_t>(idx)] / total
                                    : 1.0 / static_cast<double>(k));
    }
    return mixed;
}

}  // namespace detail

// Expected gap of the top-k Nash-weighted mixture for each k; k values above
// the population size are clamped (duplicates after clamping are dropped).
inline std::vector<GapRow> topk_ablation(const PopulationCheckpoint& cp,
                                         const std::vector<Instance>& instances,
                                         const std::vector<int>& ks,
                                         const OracleConfig& oracle_config = {}) {
    if (!cp.complete) throw IncompleteCheckpoint("topk_ablation: checkpoint incomplete");
    const int pop = static_cast<int>(cp.solvers.size());
    std::vector<int> clamped;
    for (int k : ks) {
        if (k < 1) throw InvalidParameter("topk_ablation: k must be positive");
        const int kk = std::min(k, pop);
        if (std::find(clamped.begin(), clamped.end(), kk) == clamped.end()) clamped.push_back(kk);
    }
    std::vector<GapRow> rows;
    for (int k : clamped) {
        const MixedSolver mixed = detail::topk_mixture(cp, k);
        GapRow row;
        row.variant = "topk";
        row.k = k;
        row.stats = expected_gap_on_instances(mixed.members, mixed.weights, instances, oracle_config);
        rows.push_back(row);
    }
    return rows;
}

// Weighting ablation: full population under Nash weights, under uniform
// weights, and the two highest-probability members renormalized.
inline std::vector<GapRow> weight_ablation(const PopulationCheckpoint& cp,
                                           const std::vector<Instance>& instances,
                                           const OracleConfig& oracle_config = {}) {
    if (!cp.complete) throw IncompleteCheckpoint("weight_ablation: checkpoint incomplete");
    const int pop = static_cast<int>(cp.solvers.size());
    std::vector<GapRow> rows;

    GapRow original;
    original.variant = "original";
    original.k = pop;
    original.stats = expected_gap_on_instances(cp.solvers, cp.final_sigma_ss.probs, instances, oracle_config);
    rows.push_back(original);

    GapRow uniform;
    uniform.variant = "uniform";
    uniform.k = pop;
    uniform.stats = expected_gap_on_instances(
        cp.solvers, std::vector<double>(static_cast<std::size_t>(pop), 1.0 / pop), instances, oracle_config);
    rows.push_back(uniform);

    const int k2 = std::min(2, pop);
    const MixedSolver partial = detail::topk_mixture(cp, k2);
    GapRow original_partial;
    original_partial.variant = "original_partial";
    original_partial.k = k2;
    original_partial.stats =
        expected_gap_on_instances(partial.members, partial.weights, instances, oracle_config);
    rows.push_back(original_partial);
    return rows;
}

// Exploitability with freshly trained deviations instead of the table's
// rows/columns: one new solver oracle against the final generator mixture and
// one new generator oracle against the final solver mixture, each scored by
// Monte Carlo cell evaluation. A Monte Carlo estimate of the two best-response
// gains, so unlike the restricted variant it may come out negative when
// training fails to beat the populations; reported unclamped.
struct TrainedBrResult {
    double value = 0.0;             // ½ (generator_br_gap − solver_br_gap)
    double solver_br_gap = 0.0;     // trained solver vs σ_DG mixture
    double generator_br_gap = 0.0;  // σ_SS mixture vs trained generator
    double profile_value = 0.0;     // σ_SSᵀ U σ_DG on the checkpoint table
};

inline TrainedBrResult trained_br_exploitability(const PopulationCheckpoint& cp, int M, Rng& rng) {
    if (!cp.complete) throw IncompleteCheckpoint("trained_br_exploitability: checkpoint incomplete");
    if (M < 1) throw InvalidParameter("trained_br_exploitability: M must be >= 1");
    const PsroConfig& config = cp.config;
    TrainedBrResult result;

    const std::vector<std::vector<double>> U = gap_matrix(cp.table);
    for (std::size_t r = 0; r < cp.solvers.size(); ++r) {
        for (std::size_t c = 0; c < cp.generators.size(); ++c) {
            result.profile_value += cp.final_sigma_ss.probs[r] * U[r][c] * cp.final_sigma_dg.probs[c];
        }
    }

    SolverPolicy s_init = config.mode == PsroMode::fine_tune ? cp.solvers.back()
                                                             : make_solver_policy(rng, config.temperature);
    const SolverTrainResult st =
        train_solver_oracle(s_init, cp.final_sigma_dg, cp.generators, config.solver, rng);
    for (std::size_t c = 0; c < cp.generators.size(); ++c) {
        if (cp.final_sigma_dg.probs[c] == 0.0) continue;
        Rng cell_rng(rng.next_u64());
        result.solver_br_gap += cp.final_sigma_dg.probs[c] *
                                evaluate_cell(st.policy, cp.generators[c], M, cell_rng, config.solver.oracle).u;
    }

    const GeneratorPolicy g_init = make_generator_random(config.support, rng, config.lambda);
    const GeneratorTrainResult gt =
        train_generator_oracle(g_init, cp.final_sigma_ss, cp.solvers, config.generator, rng);
    for (std::size_t r = 0; r < cp.solvers.size(); ++r) {
        if (cp.final_sigma_ss.probs[r] == 0.0) continue;
        Rng cell_rng(rng.next_u64());
        result.generator_br_gap += cp.final_sigma_ss.probs[r] *
                                   evaluate_cell(cp.solvers[r], gt.policy, M, cell_rng, config.solver.oracle).u;
    }

    result.value = 0.5 * (result.generator_br_gap - result.solver_br_gap);
    return result;
}

}  // namespace tspsro
