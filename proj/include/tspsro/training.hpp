#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/generator.hpp"
#include "tspsro/metagame.hpp"
#include "tspsro/mixed_strategy.hpp"
#include "tspsro/nn.hpp"
#include "tspsro/oracle.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/solver.hpp"

namespace tspsro {

struct SolverTrainConfig {
    int epochs = 40;
    int batches_per_epoch = 8;
    int batch_size = 32;
    double lr = 0.01;
    double lr_decay = 0.95;
    double weight_decay = 0.01;
    int validation_size = 200;
    OracleConfig oracle;
};

struct GeneratorTrainConfig {
    int epochs = 40;
    int batch_size = 64;
    double lr = 0.05;
    double lr_decay = 0.95;
    double weight_decay = 0.01;
    int eval_size = 200;
    OracleConfig oracle;
};

// Fixed instance set with cached ground-truth lengths, for epoch-snapshot
// selection during solver training.
struct ValidationSet {
    std::vector<Instance> instances;
    std::vector<double> oracle_lengths;
};

inline ValidationSet make_validation_set(const MixedStrategy& sigma_dg,
                                         const std::vector<GeneratorPolicy>& generators, int size,
                                         Rng& rng, const OracleConfig& oracle_config = {}) {
    if (generators.empty()) throw EmptyPopulation("make_validation_set: empty generator population");
    if (sigma_dg.size() != generators.size()) {
        throw InvalidWeights("make_validation_set: mixture size mismatch");
    }
    ValidationSet vs;
    vs.instances.reserve(static_cast<std::size_t>(size));
    vs.oracle_lengths.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        const int g = sample_index(sigma_dg, rng);
        const GeneratorPolicy& gen = generators[static_cast<std::size_t>(g)];
        const ScaleSample scale = sample_scale(gen, rng);
        const AttackSample s = sample_attacked_with_retry(gen, scale.n, rng);
        vs.instances.push_back(s.attacked);
        vs.oracle_lengths.push_back(oracle_for(s.attacked, oracle_config).length);
    }
    return vs;
}

inline double validation_gap(const SolverPolicy& policy, const ValidationSet& vs) {
    if (vs.instances.empty()) throw InvalidParameter("validation_gap: empty validation set");
    double mean = 0.0;
    for (std::size_t i = 0; i < vs.instances.size(); ++i) {
        mean += optimality_gap(greedy_length(policy, vs.instances[i]), vs.oracle_lengths[i]);
    }
    return mean / static_cast<double>(vs.instances.size());
}

struct SolverTrainResult {
    SolverPolicy policy;
    std::vector<double> epoch_val_gaps;  // entry e = validation gap of the epoch-e snapshot
    int selected_epoch = 0;              // 0 = the initial policy
};

// REINFORCE training of a solver against an opponent mixture: each batch
// draws one generator from sigma_dg, samples a batch of attacked instances
// from it, and applies a baseline-centered score-function step. The result
// is the per-epoch snapshot (initial policy included) with the lowest
// expected gap on a fixed validation set.
inline SolverTrainResult train_solver_oracle(const SolverPolicy& initial,
                                             const MixedStrategy& sigma_dg,
                                             const std::vector<GeneratorPolicy>& generators,
                                             const SolverTrainConfig& config, Rng& rng) {
    if (generators.empty()) throw EmptyPopulation("train_solver_oracle: empty generator population");
    validate_simplex(sigma_dg.probs, 1e-9, "train_solver_oracle");
    if (sigma_dg.size() != generators.size()) {
        throw InvalidWeights("train_solver_oracle: mixture size mismatch");
    }
    SolverTrainResult result;
    result.policy = initial;
    if (config.epochs <= 0) return result;

    const ValidationSet vs =
        make_validation_set(sigma_dg, generators, config.validation_size, rng, config.oracle);

    SolverPolicy current = initial;
    std::vector<double> params = flatten_params(current.net);
    AdamState adam = make_adam(params.size(), config.lr, config.lr_decay, config.weight_decay);

    double best_gap = validation_gap(current, vs);
    result.epoch_val_gaps.push_back(best_gap);
    result.selected_epoch = 0;
    std::vector<double> best_params = params;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (int b = 0; b < config.batches_per_epoch; ++b) {
            const int g = sample_index(sigma_dg, rng);
            const GeneratorPolicy& gen = generators[static_cast<std::size_t>(g)];
            std::vector<Instance> batch;
            batch.reserve(static_cast<std::size_t>(config.batch_size));
            for (int k = 0; k < config.batch_size; ++k) {
                const ScaleSample scale = sample_scale(gen, rng);
                batch.push_back(sample_attacked_with_retry(gen, scale.n, rng).attacked);
            }
            const SolverGradResult grad = solver_loss_gradient(current, batch, rng);
            adam_step(adam, params, flatten_grads(grad.grads));
            set_params(current.net, params);
        }
        adam_epoch_end(adam);
        const double gap = validation_gap(current, vs);
        result.epoch_val_gaps.push_back(gap);
        if (gap < best_gap) {
            best_gap = gap;
            best_params = params;
            result.selected_epoch = epoch;
        }
    }
    set_params(result.policy.net, best_params);
    return result;
}

struct GeneratorGradResult {
    NetGrads grad_C;              // ascent direction for the attack net
    std::vector<double> grad_N;   // ascent direction for the scale logits
    double mean_cost = 0.0;
    std::vector<int> scale_indices;  // per-sample scale draw
    std::vector<double> costs;       // per-sample greedy tour length
};

// Score-function gradient of the generator's expected cost (solver greedy
// tour length on attacked instances; the ground-truth denominator is
// deliberately omitted). Per sample: solver ~ sigma_ss, scale ~ P_N, base
// uniform instance, attack. Baselines: the attack-net gradient centers cost
// within each scale bucket (cost levels differ per scale); the scale-logit
// gradient centers on the global batch mean — bucket-centering there would
// cancel the signal exactly, since grad log P_N is constant within a bucket.
inline GeneratorGradResult generator_loss_gradient(const GeneratorPolicy& g,
                                                   const MixedStrategy& sigma_ss,
                                                   const std::vector<SolverPolicy>& solvers,
                                                   int batch_size, Rng& rng) {
    if (solvers.empty()) throw EmptyPopulation("generator_loss_gradient: empty solver population");
    validate_simplex(sigma_ss.probs, 1e-9, "generator_loss_gradient");
    if (sigma_ss.size() != solvers.size()) {
        throw InvalidWeights("generator_loss_gradient: mixture size mismatch");
    }
    if (batch_size < 1) throw InvalidParameter("generator_loss_gradient: batch_size must be positive");

    struct Sample {
        Instance base;
        VarianceMatrix raw;
        int scale_index = 0;
        double cost = 0.0;
    };
    std::vector<Sample> samples(static_cast<std::size_t>(batch_size));
    GeneratorGradResult result;
    result.scale_indices.resize(static_cast<std::size_t>(batch_size));
    result.costs.resize(static_cast<std::size_t>(batch_size));
    for (int k = 0; k < batch_size; ++k) {
        Sample& s = samples[static_cast<std::size_t>(k)];
        const int si = sample_index(sigma_ss, rng);
        const ScaleSample scale = sample_scale(g, rng);
        s.scale_index = scale.index;
        const AttackSample att = sample_attacked_with_retry(g, scale.n, rng);
        s.base = att.base;
        s.raw = att.raw;
        s.cost = greedy_length(solvers[static_cast<std::size_t>(si)], att.attacked);
        result.scale_indices[static_cast<std::size_t>(k)] = s.scale_index;
        result.costs[static_cast<std::size_t>(k)] = s.cost;
        result.mean_cost += s.cost;
    }
    result.mean_cost /= static_cast<double>(batch_size);

    std::map<int, std::pair<double, int>> bucket;  // scale index -> (sum, count)
    for (const Sample& s : samples) {
        auto& b = bucket[s.scale_index];
        b.first += s.cost;
        b.second += 1;
    }

    result.grad_C = zero_grads(g.gamma_C);
    result.grad_N.assign(g.gamma_N.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch_size);
    for (const Sample& s : samples) {
        const auto& b = bucket[s.scale_index];
        const double adv_c = s.cost - b.first / static_cast<double>(b.second);
        if (adv_c != 0.0) attack_logprob_gradient(g, s.base, s.raw, result.grad_C, inv * adv_c);
        const double adv_n = s.cost - result.mean_cost;
        if (adv_n != 0.0) {
            const std::vector<double> glog = grad_log_scale_prob(g, s.scale_index);
            for (std::size_t i = 0; i < glog.size(); ++i) result.grad_N[i] += inv * adv_n * glog[i];
        }
    }
    return result;
}

// Expected gap of a solver mixture (solver drawn from sigma_ss) on freshly
// sampled instances from `g`, with the draw seeded independently of the
// training stream so every epoch is scored on the same randomness.
inline double mixture_gap_on_generator(const MixedStrategy& sigma_ss,
                                       const std::vector<SolverPolicy>& solvers,
                                       const GeneratorPolicy& g, int size, std::uint64_t eval_seed,
                                       const OracleConfig& oracle_config = {}) {
    Rng rng(eval_seed);
    double mean = 0.0;
    for (int i = 0; i < size; ++i) {
        const ScaleSample scale = sample_scale(g, rng);
        const AttackSample s = sample_attacked_with_retry(g, scale.n, rng);
        const double oracle_len = oracle_for(s.attacked, oracle_config).length;
        double gap = 0.0;
        for (std::size_t j = 0; j < solvers.size(); ++j) {
            if (sigma_ss.probs[j] == 0.0) continue;
            gap += sigma_ss.probs[j] *
                   optimality_gap(greedy_length(solvers[j], s.attacked), oracle_len);
        }
        mean += gap;
    }
    return mean / static_cast<double>(size);
}

struct GeneratorTrainResult {
    GeneratorPolicy policy;
    std::vector<double> epoch_eval_gaps;  // entry e = mixture gap against the epoch-e snapshot
    int selected_epoch = 0;
};

// Adversarial training of a generator against a frozen solver mixture:
// ascend the expected-cost gradient; keep the per-epoch snapshot (initial
// generator included) on which the solver mixture's expected gap is largest,
// measured on a fixed-seed held-out draw from the current snapshot.
inline GeneratorTrainResult train_generator_oracle(const GeneratorPolicy& initial,
                                                   const MixedStrategy& sigma_ss,
                                                   const std::vector<SolverPolicy>& solvers,
                                                   const GeneratorTrainConfig& config, Rng& rng) {
    if (solvers.empty()) throw EmptyPopulation("train_generator_oracle: empty solver population");
    validate_simplex(sigma_ss.probs, 1e-9, "train_generator_oracle");
    if (sigma_ss.size() != solvers.size()) {
        throw InvalidWeights("train_generator_oracle: mixture size mismatch");
    }
    GeneratorTrainResult result;
    result.policy = initial;
    if (config.epochs <= 0) return result;

    const std::uint64_t eval_seed = rng.next_u64();
    GeneratorPolicy current = initial;
    std::vector<double> net_params = flatten_params(current.gamma_C);
    AdamState adam_net = make_adam(net_params.size(), config.lr, config.lr_decay, config.weight_decay);
    AdamState adam_logits =
        make_adam(current.gamma_N.size(), config.lr, config.lr_decay, config.weight_decay);

    double best_gap = mixture_gap_on_generator(sigma_ss, solvers, current, config.eval_size,
                                               eval_seed, config.oracle);
    result.epoch_eval_gaps.push_back(best_gap);
    result.selected_epoch = 0;
    GeneratorPolicy best = current;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const GeneratorGradResult grad =
            generator_loss_gradient(current, sigma_ss, solvers, config.batch_size, rng);
        // Adam minimizes; negate the ascent direction.
        std::vector<double> neg_c = flatten_grads(grad.grad_C);
        for (double& v : neg_c) v = -v;
        adam_step(adam_net, net_params, neg_c);
        set_params(current.gamma_C, net_params);
        std::vector<double> neg_n = grad.grad_N;
        for (double& v : neg_n) v = -v;
        adam_step(adam_logits, current.gamma_N, neg_n);
        adam_epoch_end(adam_net);
        adam_epoch_end(adam_logits);

        const double gap = mixture_gap_on_generator(sigma_ss, solvers, current, config.eval_size,
                                                    eval_seed, config.oracle);
        result.epoch_eval_gaps.push_back(gap);
        if (gap > best_gap) {
            best_gap = gap;
            best = current;
            result.selected_epoch = epoch;
        }
    }
    result.policy = best;
    return result;
}

}  // namespace tspsro
