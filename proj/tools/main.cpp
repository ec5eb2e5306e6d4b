// tspsro — train and evaluate populations of adversarially-robust TSP
// solvers via a two-player zero-sum meta-game.
//
// Subcommands: run, eval, attack, exploitability, solve, export-dataset.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tspsro/checkpoint.hpp"
#include "tspsro/generator.hpp"
#include "tspsro/metagame.hpp"
#include "tspsro/oracle.hpp"
#include "tspsro/psro.hpp"
#include "tspsro/solver.hpp"
#include "tspsro/training.hpp"
#include "tspsro/tsp.hpp"

namespace fs = std::filesystem;
using tspsro::json;

namespace {

struct GlobalOpts {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string output_dir = ".";
};

void ensure_output_dir(const GlobalOpts& g) {
    if (!g.output_dir.empty()) fs::create_directories(g.output_dir);
}

fs::path out_path(const GlobalOpts& g, const std::string& name) {
    return fs::path(g.output_dir) / name;
}

// Accepts either a bare solver policy file or a full run checkpoint; in the
// latter case the highest-Nash-weight solver is selected.
tspsro::SolverPolicy load_single_solver(const fs::path& path) {
    const json j = tspsro::parse_json_file(path);
    if (j.is_object() && j.contains("theta")) return tspsro::solver_from_json(j, 0);
    if (j.is_object() && j.contains("format")) {
        const tspsro::PopulationCheckpoint cp = tspsro::checkpoint_from_json(j);
        if (!cp.complete) throw tspsro::IncompleteCheckpoint("checkpoint is flagged incomplete");
        std::size_t best = 0;
        for (std::size_t i = 1; i < cp.final_sigma_ss.size(); ++i) {
            if (cp.final_sigma_ss.probs[i] > cp.final_sigma_ss.probs[best]) best = i;
        }
        return cp.solvers[best];
    }
    throw tspsro::ConfigError(path.string() + ": neither a solver policy nor a run checkpoint");
}

tspsro::PopulationCheckpoint load_checkpoint(const fs::path& path) {
    return tspsro::checkpoint_from_json(tspsro::parse_json_file(path));
}

// ---------- run ----------

int cmd_run(const std::string& config_path, const GlobalOpts& g_in) {
    GlobalOpts g = g_in;
    tspsro::PsroConfig config;
    std::vector<std::string> eval_datasets;
    try {
        json cfg_json = tspsro::parse_json_file(config_path);
        if (!cfg_json.is_object()) throw tspsro::ConfigError("experiment config: expected a JSON object");
        // Experiment-level keys consumed here; the rest mirrors the library
        // config. The --output-dir flag wins over the config entry.
        if (cfg_json.contains("output_dir")) {
            if (g.output_dir == ".") g.output_dir = cfg_json.at("output_dir").get<std::string>();
            cfg_json.erase("output_dir");
        }
        if (cfg_json.contains("eval_datasets")) {
            eval_datasets = cfg_json.at("eval_datasets").get<std::vector<std::string>>();
            for (const std::string& p : eval_datasets) {
                if (!fs::exists(p)) throw tspsro::ConfigError("eval_datasets: no such file: " + p);
            }
            cfg_json.erase("eval_datasets");
        }
        config = tspsro::psro_config_from_json(cfg_json);
        if (g.seed) config.master_seed = *g.seed;
        if (g.threads) config.threads = *g.threads;
        tspsro::validate_psro_config(config);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        ensure_output_dir(g);
        std::cout << "run: " << config.iterations << " iterations, M=" << config.M
                  << ", seed=" << config.master_seed << "\n";
        const tspsro::PopulationCheckpoint cp =
            tspsro::psro_run(config, [](const tspsro::IterationRecord& rec) {
                std::cout << "iter " << rec.iteration << ": value=" << rec.game_value
                          << " online_expl=" << rec.online_expl << " sparsity=" << rec.sparsity
                          << " solver_epoch=" << rec.solver_selected_epoch
                          << " generator_epoch=" << rec.generator_selected_epoch << "\n";
            });
        tspsro::save_text_atomic(out_path(g, "checkpoint.json"),
                                 tspsro::checkpoint_to_json(cp).dump(2) + "\n");
        if (!cp.complete) {
            std::cerr << "run failed: " << cp.error << " (partial checkpoint written)\n";
            return 1;
        }
        tspsro::save_text_atomic(out_path(g, "exploitability.csv"), tspsro::exploitability_csv(cp));
        tspsro::save_text_atomic(out_path(g, "metastrategy.csv"), tspsro::metastrategy_csv(cp));
        tspsro::save_text_atomic(
            out_path(g, "meta_table.csv"),
            tspsro::meta_table_csv(cp.table, config.master_seed, tspsro::config_hash_hex(config)));
        if (!eval_datasets.empty()) {
            std::vector<std::pair<std::string, tspsro::GapRow>> rows;
            for (const std::string& path : eval_datasets) {
                const tspsro::Dataset ds = tspsro::dataset_from_json(tspsro::parse_json_file(path));
                tspsro::GapRow row;
                row.variant = "original";
                row.k = static_cast<int>(cp.solvers.size());
                row.stats = tspsro::expected_gap_on_instances(cp.solvers, cp.final_sigma_ss.probs,
                                                              ds.instances, config.solver.oracle);
                rows.emplace_back(fs::path(path).stem().string(), row);
            }
            tspsro::save_text_atomic(
                out_path(g, "gaps.csv"),
                tspsro::gaps_csv(rows, config.master_seed, tspsro::config_hash_hex(config)));
        }
        std::cout << "wrote " << out_path(g, "checkpoint.json").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------- eval ----------

struct EvalJob {
    std::string dataset_id;
    std::vector<tspsro::Instance> normalized;  // what the solvers see
    std::vector<tspsro::Instance> raw;         // what lengths/gaps are measured on
};

// Gap of a solver mixture when tours are decoded on normalized coordinates
// but measured on the raw ones (identical to the plain path when raw ==
// normalized).
tspsro::GapStats mixture_gap_raw(const std::vector<tspsro::SolverPolicy>& members,
                                 const std::vector<double>& weights, const EvalJob& job,
                                 const tspsro::OracleConfig& oc,
                                 std::vector<tspsro::InstanceGapRow>* per_instance = nullptr) {
    tspsro::validate_simplex(weights, 1e-9, "eval weights");
    std::vector<double> gaps(job.raw.size(), 0.0);
    for (std::size_t i = 0; i < job.raw.size(); ++i) {
        const double oracle_len = tspsro::oracle_for(job.raw[i], oc).length;
        double gap = 0.0;
        double exp_len = 0.0;
        for (std::size_t m = 0; m < members.size(); ++m) {
            if (weights[m] == 0.0) continue;
            const tspsro::Tour tour = tspsro::greedy_decode(members[m], job.normalized[i]);
            const double len = tspsro::tour_length(job.raw[i], tour);
            exp_len += weights[m] * len;
            gap += weights[m] * tspsro::optimality_gap(len, oracle_len);
        }
        gaps[i] = gap;
        if (per_instance) {
            per_instance->push_back({job.dataset_id, static_cast<int>(i), exp_len, oracle_len, gap});
        }
    }
    tspsro::GapStats stats;
    for (double v : gaps) stats.mean += v;
    stats.mean /= static_cast<double>(gaps.size());
    if (gaps.size() > 1) {
        double var = 0.0;
        for (double v : gaps) var += (v - stats.mean) * (v - stats.mean);
        stats.stderr_ = std::sqrt(var / static_cast<double>(gaps.size() - 1) /
                                  static_cast<double>(gaps.size()));
    }
    return stats;
}

int cmd_eval(const std::string& checkpoint_path, const std::vector<std::string>& dataset_paths,
             const std::vector<std::string>& tsplib_paths, int grid_scale, int grid_count,
             std::uint64_t grid_seed_opt, bool grid_seed_set, const std::string& variants_csv,
             const std::string& topk_csv, const GlobalOpts& g) {
    tspsro::PopulationCheckpoint cp;
    std::vector<EvalJob> jobs;
    std::vector<std::string> variants;
    std::vector<int> topk;
    try {
        cp = load_checkpoint(checkpoint_path);
        if (!cp.complete) throw tspsro::IncompleteCheckpoint("checkpoint is flagged incomplete");

        for (const std::string& path : dataset_paths) {
            const tspsro::Dataset ds = tspsro::dataset_from_json(tspsro::parse_json_file(path));
            if (ds.instances.empty()) throw tspsro::ConfigError(path + ": empty dataset");
            EvalJob job;
            job.dataset_id = fs::path(path).stem().string();
            for (const tspsro::Instance& inst : ds.instances) {
                const tspsro::Instance norm = tspsro::normalize(inst);
                job.normalized.push_back(norm);
                job.raw.push_back(norm);  // benchmark datasets are already unit-square
            }
            jobs.push_back(std::move(job));
        }
        for (const std::string& path : tsplib_paths) {
            const tspsro::Instance raw = tspsro::parse_tsplib(tspsro::load_text(path));
            EvalJob job;
            job.dataset_id = fs::path(path).stem().string();
            job.raw.push_back(raw);
            job.normalized.push_back(tspsro::normalize(raw));
            jobs.push_back(std::move(job));
        }
        if (grid_scale > 0) {
            if (grid_scale < 3) throw tspsro::ConfigError("--grid-scale must be >= 3");
            if (grid_count < 1) throw tspsro::ConfigError("--grid-count must be >= 1");
            const std::uint64_t base_seed = grid_seed_set ? grid_seed_opt : cp.config.master_seed;
            for (int k = 1; k <= 10; ++k) {
                const double lambda = 0.1 * k;
                tspsro::Rng rng(tspsro::derive_seed(base_seed, static_cast<std::uint64_t>(k), 0xDA7AULL));
                const tspsro::Dataset ds = tspsro::generate_benchmark(
                    grid_scale, lambda, grid_count, rng, base_seed);
                EvalJob job;
                char id[32];
                std::snprintf(id, sizeof(id), "lambda_%.1f", lambda);
                job.dataset_id = id;
                job.normalized = ds.instances;
                job.raw = ds.instances;
                jobs.push_back(std::move(job));
            }
        }
        if (jobs.empty()) {
            throw tspsro::ConfigError("no dataset given: use --dataset, --tsplib, or --grid-scale");
        }

        std::stringstream vs(variants_csv);
        std::string tok;
        while (std::getline(vs, tok, ',')) {
            if (tok.empty()) continue;
            if (tok != "original" && tok != "uniform" && tok != "original_partial") {
                throw tspsro::ConfigError("unknown variant '" + tok + "'");
            }
            variants.push_back(tok);
        }
        std::stringstream ks(topk_csv);
        while (std::getline(ks, tok, ',')) {
            if (tok.empty()) continue;
            topk.push_back(std::stoi(tok));
            if (topk.back() < 1) throw tspsro::ConfigError("--topk entries must be positive");
        }
        if (variants.empty() && topk.empty()) variants.push_back("original");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        ensure_output_dir(g);
        const tspsro::OracleConfig oc = cp.config.solver.oracle;
        const std::string hash = tspsro::config_hash_hex(cp.config);
        const int pop = static_cast<int>(cp.solvers.size());
        std::vector<std::pair<std::string, tspsro::GapRow>> rows;
        std::vector<tspsro::InstanceGapRow> per_instance;

        for (const EvalJob& job : jobs) {
            for (const std::string& variant : variants) {
                std::vector<tspsro::SolverPolicy> members;
                std::vector<double> weights;
                int k = pop;
                if (variant == "original") {
                    members = cp.solvers;
                    weights = cp.final_sigma_ss.probs;
                } else if (variant == "uniform") {
                    members = cp.solvers;
                    weights.assign(static_cast<std::size_t>(pop), 1.0 / pop);
                } else {  // original_partial: two highest-probability members
                    std::vector<int> order(cp.final_sigma_ss.size());
                    std::iota(order.begin(), order.end(), 0);
                    std::stable_sort(order.begin(), order.end(), [&cp](int a, int b) {
                        return cp.final_sigma_ss.probs[static_cast<std::size_t>(a)] >
                               cp.final_sigma_ss.probs[static_cast<std::size_t>(b)];
                    });
                    k = std::min(2, pop);
                    double total = 0.0;
                    for (int i = 0; i < k; ++i) total += cp.final_sigma_ss.probs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                    for (int i = 0; i < k; ++i) {
                        const int idx = order[static_cast<std::size_t>(i)];
                        members.push_back(cp.solvers[static_cast<std::size_t>(idx)]);
                        weights.push_back(total > 0.0
                                              ? cp.final_sigma_ss.probs[static_cast<std::size_t>(idx)] / total
                                              : 1.0 / k);
                    }
                }
                tspsro::GapRow row;
                row.variant = variant;
                row.k = k;
                row.stats = mixture_gap_raw(members, weights, job, oc,
                                            variant == "original" ? &per_instance : nullptr);
                rows.emplace_back(job.dataset_id, row);
            }
            for (int k : topk) {
                const int kk = std::min(k, pop);
                if (kk < k) std::cerr << "warning: --topk " << k << " clamped to population size " << pop << "\n";
                std::vector<int> order(cp.final_sigma_ss.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&cp](int a, int b) {
                    return cp.final_sigma_ss.probs[static_cast<std::size_t>(a)] >
                           cp.final_sigma_ss.probs[static_cast<std::size_t>(b)];
                });
                std::vector<tspsro::SolverPolicy> members;
                std::vector<double> weights;
                double total = 0.0;
                for (int i = 0; i < kk; ++i) total += cp.final_sigma_ss.probs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                for (int i = 0; i < kk; ++i) {
                    const int idx = order[static_cast<std::size_t>(i)];
                    members.push_back(cp.solvers[static_cast<std::size_t>(idx)]);
                    weights.push_back(total > 0.0 ? cp.final_sigma_ss.probs[static_cast<std::size_t>(idx)] / total
                                                  : 1.0 / kk);
                }
                tspsro::GapRow row;
                row.variant = "topk";
                row.k = kk;
                row.stats = mixture_gap_raw(members, weights, job, oc, nullptr);
                rows.emplace_back(job.dataset_id, row);
            }
        }
        tspsro::save_text_atomic(out_path(g, "gaps.csv"),
                                 tspsro::gaps_csv(rows, cp.config.master_seed, hash));
        tspsro::save_text_atomic(out_path(g, "instance_gaps.csv"),
                                 tspsro::instance_gaps_csv(per_instance, cp.config.master_seed, hash));
        for (const auto& [id, row] : rows) {
            std::cout << id << " " << row.variant << " k=" << row.k << " mean_gap=" << row.stats.mean
                      << " stderr=" << row.stats.stderr_ << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------- attack ----------

struct AttackConfig {
    int scale = 10;
    int count = 200;  // paired instances in the final report
    double lambda = tspsro::kDefaultLambda;
    std::uint64_t seed = 1;
    tspsro::GeneratorTrainConfig train;
};

AttackConfig attack_config_from_json(const json& j) {
    const char* where = "attack config";
    tspsro::detail::require_keys(j,
                                 {"scale", "count", "lambda", "seed", "epochs", "batch_size", "lr",
                                  "lr_decay", "weight_decay", "eval_size", "oracle"},
                                 where);
    AttackConfig c;
    c.scale = tspsro::detail::get_or(j, "scale", c.scale, where);
    c.count = tspsro::detail::get_or(j, "count", c.count, where);
    c.lambda = tspsro::detail::get_or(j, "lambda", c.lambda, where);
    c.seed = tspsro::detail::get_or(j, "seed", c.seed, where);
    c.train.epochs = tspsro::detail::get_or(j, "epochs", c.train.epochs, where);
    c.train.batch_size = tspsro::detail::get_or(j, "batch_size", c.train.batch_size, where);
    c.train.lr = tspsro::detail::get_or(j, "lr", c.train.lr, where);
    c.train.lr_decay = tspsro::detail::get_or(j, "lr_decay", c.train.lr_decay, where);
    c.train.weight_decay = tspsro::detail::get_or(j, "weight_decay", c.train.weight_decay, where);
    c.train.eval_size = tspsro::detail::get_or(j, "eval_size", c.train.eval_size, where);
    if (j.contains("oracle")) c.train.oracle = tspsro::oracle_config_from_json(j.at("oracle"));
    if (c.scale < 3) throw tspsro::ConfigError("attack config: scale must be >= 3");
    if (c.count < 2) throw tspsro::ConfigError("attack config: count must be >= 2");
    if (!(c.lambda > 0.0) || c.lambda > 1.0) throw tspsro::ConfigError("attack config: lambda must be in (0, 1]");
    if (c.train.epochs < 0) throw tspsro::ConfigError("attack config: epochs must be >= 0");
    return c;
}

int cmd_attack(const std::string& solver_path, const std::string& config_path, const GlobalOpts& g) {
    tspsro::SolverPolicy solver;
    AttackConfig cfg;
    json cfg_json;
    try {
        solver = load_single_solver(solver_path);
        cfg_json = tspsro::parse_json_file(config_path);
        cfg = attack_config_from_json(cfg_json);
        if (g.seed) cfg.seed = *g.seed;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        ensure_output_dir(g);
        const std::string hash = [&] {
            char buf[17];
            std::snprintf(buf, sizeof(buf), "%016llx",
                          static_cast<unsigned long long>(tspsro::fnv1a64(cfg_json.dump())));
            return std::string(buf);
        }();
        const std::vector<tspsro::SolverPolicy> pop = {solver};
        const tspsro::MixedStrategy sigma_ss{{1.0}};
        const std::vector<int> support = {cfg.scale};

        tspsro::Rng rng(tspsro::derive_seed(cfg.seed, 0xA77ACULL));
        tspsro::GeneratorTrainResult trained;
        if (cfg.train.epochs == 0) {
            // Untrained baseline: the identity attack leaves instances
            // effectively unperturbed.
            trained.policy = tspsro::make_generator_identity(support, cfg.lambda, 0);
        } else {
            const tspsro::GeneratorPolicy init =
                tspsro::make_generator_random(support, rng, cfg.lambda, 0);
            trained = tspsro::train_generator_oracle(init, sigma_ss, pop, cfg.train, rng);
        }

        // Paired comparison: each base instance is scored clean and attacked.
        tspsro::Rng eval_rng(tspsro::derive_seed(cfg.seed, 0xE7A1ULL));
        std::vector<double> uniform_gaps, attacked_gaps;
        for (int i = 0; i < cfg.count; ++i) {
            const tspsro::Instance base =
                tspsro::normalize(tspsro::generate_uniform(cfg.scale, eval_rng));
            const tspsro::AttackSample att =
                tspsro::perturb(base, tspsro::attack_variance(trained.policy, base), eval_rng);
            const double gap_u = tspsro::optimality_gap(
                tspsro::greedy_length(solver, base), tspsro::oracle_for(base, cfg.train.oracle).length);
            const double gap_a = tspsro::optimality_gap(
                tspsro::greedy_length(solver, att.attacked),
                tspsro::oracle_for(att.attacked, cfg.train.oracle).length);
            uniform_gaps.push_back(gap_u);
            attacked_gaps.push_back(gap_a);
        }
        double mean_u = 0.0, mean_a = 0.0;
        for (int i = 0; i < cfg.count; ++i) {
            mean_u += uniform_gaps[static_cast<std::size_t>(i)];
            mean_a += attacked_gaps[static_cast<std::size_t>(i)];
        }
        mean_u /= cfg.count;
        mean_a /= cfg.count;
        double var_d = 0.0;
        const double mean_d = mean_a - mean_u;
        for (int i = 0; i < cfg.count; ++i) {
            const double d = attacked_gaps[static_cast<std::size_t>(i)] - uniform_gaps[static_cast<std::size_t>(i)];
            var_d += (d - mean_d) * (d - mean_d);
        }
        const double paired_stderr =
            std::sqrt(var_d / static_cast<double>(cfg.count - 1) / static_cast<double>(cfg.count));

        tspsro::save_text_atomic(out_path(g, "generator.json"),
                                 tspsro::generator_to_json(trained.policy).dump(2) + "\n");
        tspsro::save_text_atomic(out_path(g, "attack_curve.csv"),
                                 tspsro::attack_curve_csv(trained.epoch_eval_gaps, cfg.seed, hash));
        const json report{{"uniform_gap", mean_u},
                          {"attacked_gap", mean_a},
                          {"gap_increase", mean_d},
                          {"paired_stderr", paired_stderr},
                          {"count", cfg.count},
                          {"epochs", cfg.train.epochs},
                          {"selected_epoch", trained.selected_epoch},
                          {"scale", cfg.scale},
                          {"seed", cfg.seed}};
        tspsro::save_text_atomic(out_path(g, "attack_report.json"), report.dump(2) + "\n");
        std::cout << "uniform_gap=" << mean_u << " attacked_gap=" << mean_a
                  << " increase=" << mean_d << " paired_stderr=" << paired_stderr << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------- exploitability ----------

int cmd_exploitability(const std::string& checkpoint_path, bool trained_br, int trained_br_M,
                       const GlobalOpts& g) {
    tspsro::PopulationCheckpoint cp;
    try {
        cp = load_checkpoint(checkpoint_path);
        if (!cp.complete) throw tspsro::IncompleteCheckpoint("checkpoint is flagged incomplete");
        if (trained_br && trained_br_M < 1) throw tspsro::ConfigError("--trained-br-M must be >= 1");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        ensure_output_dir(g);
        // Recompute the series from the stored table: iteration t's table is
        // the top-left (t+1)x(t+1) block of the final one.
        const std::vector<std::vector<double>> U = tspsro::gap_matrix(cp.table);
        tspsro::PopulationCheckpoint recomputed = cp;
        for (std::size_t k = 0; k < cp.iterations.size(); ++k) {
            const int t = cp.iterations[k].iteration;
            std::vector<std::vector<double>> block(static_cast<std::size_t>(t) + 1);
            for (int r = 0; r <= t; ++r) {
                block[static_cast<std::size_t>(r)] =
                    std::vector<double>(U[static_cast<std::size_t>(r)].begin(),
                                        U[static_cast<std::size_t>(r)].begin() + t + 1);
            }
            const tspsro::MixedStrategy prev_ss =
                k == 0 ? tspsro::MixedStrategy{{1.0}} : cp.iterations[k - 1].sigma_ss;
            const tspsro::MixedStrategy prev_dg =
                k == 0 ? tspsro::MixedStrategy{{1.0}} : cp.iterations[k - 1].sigma_dg;
            recomputed.iterations[k].online_expl =
                tspsro::exploitability(block, tspsro::pad_strategy(prev_ss, static_cast<std::size_t>(t) + 1),
                                       tspsro::pad_strategy(prev_dg, static_cast<std::size_t>(t) + 1));
            recomputed.iterations[k].retro_expl = tspsro::exploitability(
                U, tspsro::pad_strategy(cp.iterations[k].sigma_ss, cp.solvers.size()),
                tspsro::pad_strategy(cp.iterations[k].sigma_dg, cp.generators.size()));
        }
        tspsro::save_text_atomic(out_path(g, "exploitability.csv"),
                                 tspsro::exploitability_csv(recomputed));
        for (const tspsro::IterationRecord& rec : recomputed.iterations) {
            std::cout << "iter " << rec.iteration << ": online=" << rec.online_expl
                      << " retro=" << rec.retro_expl << " value=" << rec.game_value << "\n";
        }
        if (trained_br) {
            const std::uint64_t seed = g.seed ? *g.seed : cp.config.master_seed;
            tspsro::Rng rng(tspsro::derive_seed(seed, 0x7BE2ULL));
            const tspsro::TrainedBrResult tb = tspsro::trained_br_exploitability(cp, trained_br_M, rng);
            const json report{{"trained_br_exploitability", tb.value},
                              {"solver_br_gap", tb.solver_br_gap},
                              {"generator_br_gap", tb.generator_br_gap},
                              {"profile_value", tb.profile_value},
                              {"M", trained_br_M},
                              {"seed", seed}};
            tspsro::save_text_atomic(out_path(g, "trained_br.json"), report.dump(2) + "\n");
            std::cout << "trained_br: value=" << tb.value << " solver_br_gap=" << tb.solver_br_gap
                      << " generator_br_gap=" << tb.generator_br_gap << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------- solve ----------

int cmd_solve(const std::string& model, const std::string& instance_path, const GlobalOpts&) {
    tspsro::Instance raw;
    bool use_oracle = false;
    tspsro::PopulationCheckpoint cp;
    tspsro::SolverPolicy single;
    bool single_solver = false;
    try {
        raw = tspsro::parse_tsplib(tspsro::load_text(instance_path));
        if (model == "oracle") {
            use_oracle = true;
        } else {
            const json j = tspsro::parse_json_file(model);
            if (j.is_object() && j.contains("theta")) {
                single = tspsro::solver_from_json(j, 0);
                single_solver = true;
            } else {
                cp = tspsro::checkpoint_from_json(j);
                if (!cp.complete) throw tspsro::IncompleteCheckpoint("checkpoint is flagged incomplete");
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        tspsro::Tour tour;
        if (use_oracle) {
            tour = tspsro::oracle_for(raw).tour;
        } else if (single_solver) {
            tour = tspsro::greedy_decode(single, tspsro::normalize(raw));
        } else {
            const tspsro::MixedSolver mixed =
                tspsro::build_mixed_solver(cp, cp.config.support_threshold);
            tour = tspsro::mixed_greedy_decode(mixed, tspsro::normalize(raw));
        }
        std::cout << "length " << tspsro::detail::format_double(tspsro::tour_length(raw, tour)) << "\n";
        std::cout << "tour";
        for (int city : tour.order) std::cout << " " << city;
        std::cout << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------- export-dataset ----------

int cmd_export_dataset(int scale, double lambda, int count, std::uint64_t seed,
                       const std::string& out_file, const GlobalOpts& g) {
    try {
        if (scale < 3) throw tspsro::ConfigError("--scale must be >= 3");
        if (count < 1) throw tspsro::ConfigError("--count must be >= 1");
        if (lambda < 0.0 || lambda > 1.0) throw tspsro::ConfigError("--lambda must be in [0, 1]");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        ensure_output_dir(g);
        const std::uint64_t use_seed = g.seed ? *g.seed : seed;
        tspsro::Rng rng(use_seed);
        const tspsro::Dataset ds = tspsro::generate_benchmark(scale, lambda, count, rng, use_seed);
        tspsro::save_text_atomic(out_path(g, out_file), tspsro::dataset_to_json(ds).dump(2) + "\n");
        std::cout << "wrote " << out_path(g, out_file).string() << " (" << count << " instances)\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tspsro: adversarial population training for TSP solvers"};
    app.require_subcommand(1);

    GlobalOpts g;
    // Option callbacks fire before subcommand callbacks, so the overrides are
    // visible inside the command handlers.
    app.add_option_function<std::uint64_t>(
        "--seed", [&g](std::uint64_t v) { g.seed = v; }, "override the master seed");
    app.add_option_function<int>(
        "--threads", [&g](int v) { g.threads = v; }, "meta-table evaluation threads");
    app.add_option("--output-dir", g.output_dir, "directory for output files")->capture_default_str();

    int rc = 0;

    auto* run = app.add_subcommand("run", "execute a full population-training experiment");
    std::string run_config;
    run->add_option("config", run_config, "experiment config JSON")->required();
    run->callback([&]() { rc = cmd_run(run_config, g); });

    auto* eval = app.add_subcommand("eval", "evaluate solver mixtures on datasets");
    std::string eval_checkpoint;
    std::vector<std::string> eval_datasets, eval_tsplib;
    int grid_scale = 0, grid_count = 50;
    std::uint64_t grid_seed = 0;
    std::string variants = "", topk = "";
    eval->add_option("checkpoint", eval_checkpoint, "run checkpoint JSON")->required();
    eval->add_option("--dataset", eval_datasets, "dataset JSON file(s)");
    eval->add_option("--tsplib", eval_tsplib, "TSPLIB instance file(s)");
    eval->add_option("--grid-scale", grid_scale, "generate a lambda-grid benchmark at this scale");
    eval->add_option("--grid-count", grid_count, "instances per lambda-grid dataset")->capture_default_str();
    auto* grid_seed_opt = eval->add_option("--grid-seed", grid_seed, "seed for lambda-grid generation");
    eval->add_option("--variants", variants, "comma list: original,uniform,original_partial");
    eval->add_option("--topk", topk, "comma list of k values for top-k mixtures");
    eval->callback([&]() {
        rc = cmd_eval(eval_checkpoint, eval_datasets, eval_tsplib, grid_scale, grid_count, grid_seed,
                      grid_seed_opt->count() > 0, variants, topk, g);
    });

    auto* attack = app.add_subcommand("attack", "train an adversarial generator against one solver");
    std::string attack_solver, attack_config;
    attack->add_option("solver", attack_solver, "solver policy JSON or run checkpoint")->required();
    attack->add_option("config", attack_config, "attack config JSON")->required();
    attack->callback([&]() { rc = cmd_attack(attack_solver, attack_config, g); });

    auto* expl = app.add_subcommand("exploitability", "recompute the exploitability series");
    std::string expl_checkpoint;
    bool trained_br = false;
    int trained_br_M = 100;
    expl->add_option("checkpoint", expl_checkpoint, "run checkpoint JSON")->required();
    expl->add_flag("--trained-br", trained_br,
                   "also estimate exploitability with freshly trained best responses");
    expl->add_option("--trained-br-M", trained_br_M, "samples per cell for --trained-br")
        ->capture_default_str();
    expl->callback([&]() { rc = cmd_exploitability(expl_checkpoint, trained_br, trained_br_M, g); });

    auto* solve = app.add_subcommand("solve", "solve one instance with a model or the oracle");
    std::string solve_model, solve_instance;
    solve->add_option("model", solve_model, "checkpoint JSON, solver JSON, or 'oracle'")->required();
    solve->add_option("instance", solve_instance, "TSPLIB instance file")->required();
    solve->callback([&]() { rc = cmd_solve(solve_model, solve_instance, g); });

    auto* exp = app.add_subcommand("export-dataset", "generate and save a benchmark dataset");
    int exp_scale = 10, exp_count = 100;
    double exp_lambda = 0.5;
    std::uint64_t exp_seed = 1;
    std::string exp_out = "dataset.json";
    exp->add_option("--scale", exp_scale, "cities per instance")->capture_default_str();
    exp->add_option("--lambda", exp_lambda, "variance cap in [0, 1]")->capture_default_str();
    exp->add_option("--count", exp_count, "number of instances")->capture_default_str();
    exp->add_option("--dataset-seed", exp_seed, "generation seed")->capture_default_str();
    exp->add_option("--out", exp_out, "output file name")->capture_default_str();
    exp->callback([&]() { rc = cmd_export_dataset(exp_scale, exp_lambda, exp_count, exp_seed, exp_out, g); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return rc;
}
