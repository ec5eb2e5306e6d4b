#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tspsro/errors.hpp"
#include "tspsro/generator.hpp"
#include "tspsro/metagame.hpp"
#include "tspsro/psro.hpp"
#include "tspsro/solver.hpp"
#include "tspsro/tsp.hpp"

namespace tspsro {

using json = nlohmann::ordered_json;

// ---------- strict object access ----------

namespace detail {

inline void require_keys(const json& j, const std::vector<std::string>& allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const std::string& k : allowed) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
T get_required(const json& j, const char* key, const char* where) {
    if (!j.contains(key)) throw ConfigError(std::string(where) + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + ": key '" + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + ": key '" + key + "' has the wrong type");
    }
}

inline const json& get_section(const json& j, const char* key, const char* where) {
    if (!j.contains(key)) throw ConfigError(std::string(where) + ": missing key '" + key + "'");
    return j.at(key);
}

}  // namespace detail

// ---------- network / policy serialization ----------

inline json net_to_json(const DenseNet& net) {
    json layers = json::array();
    for (const DenseLayer& layer : net.layers) {
        json rows = json::array();
        for (int o = 0; o < layer.out_dim; ++o) {
            json row = json::array();
            for (int i = 0; i < layer.in_dim; ++i) {
                row.push_back(layer.W[static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in_dim) +
                                      static_cast<std::size_t>(i)]);
            }
            rows.push_back(std::move(row));
        }
        layers.push_back(json{{"activation", activation_name(layer.act)},
                              {"W", std::move(rows)},
                              {"b", layer.b}});
    }
    return layers;
}

inline DenseNet net_from_json(const json& j, const char* where = "net_from_json") {
    if (!j.is_array() || j.empty()) throw ConfigError(std::string(where) + ": expected a layer array");
    DenseNet net;
    for (const json& lj : j) {
        detail::require_keys(lj, {"activation", "W", "b"}, where);
        DenseLayer layer;
        layer.act = activation_from_name(detail::get_required<std::string>(lj, "activation", where));
        const json& rows = detail::get_section(lj, "W", where);
        if (!rows.is_array() || rows.empty()) throw ConfigError(std::string(where) + ": W must be a non-empty array");
        layer.out_dim = static_cast<int>(rows.size());
        layer.in_dim = static_cast<int>(rows.at(0).size());
        for (const json& row : rows) {
            if (static_cast<int>(row.size()) != layer.in_dim) {
                throw ConfigError(std::string(where) + ": ragged weight matrix");
            }
            for (const json& v : row) layer.W.push_back(v.get<double>());
        }
        layer.b = detail::get_required<std::vector<double>>(lj, "b", where);
        net.layers.push_back(std::move(layer));
    }
    validate_net(net);
    return net;
}

inline json solver_to_json(const SolverPolicy& p) {
    return json{{"theta", net_to_json(p.net)},
                {"temperature", p.temperature},
                {"feature_dim", kFeatureDim}};
}

inline SolverPolicy solver_from_json(const json& j, int id = -1) {
    const char* where = "solver checkpoint";
    detail::require_keys(j, {"theta", "temperature", "feature_dim"}, where);
    SolverPolicy p;
    p.net = net_from_json(detail::get_section(j, "theta", where), where);
    p.temperature = detail::get_required<double>(j, "temperature", where);
    if (!(p.temperature > 0.0)) throw ConfigError("solver checkpoint: temperature must be positive");
    const int fd = detail::get_required<int>(j, "feature_dim", where);
    if (fd != kFeatureDim || p.net.input_dim() != kFeatureDim || p.net.output_dim() != 1) {
        throw ConfigError("solver checkpoint: unexpected network shape");
    }
    p.id = id;
    return p;
}

inline json generator_to_json(const GeneratorPolicy& g) {
    return json{{"gamma_N", g.gamma_N},
                {"support", g.support},
                {"gamma_C", net_to_json(g.gamma_C)},
                {"lambda", g.lambda}};
}

inline GeneratorPolicy generator_from_json(const json& j, int id = -1) {
    const char* where = "generator checkpoint";
    detail::require_keys(j, {"gamma_N", "support", "gamma_C", "lambda"}, where);
    GeneratorPolicy g;
    g.gamma_N = detail::get_required<std::vector<double>>(j, "gamma_N", where);
    g.support = detail::get_required<std::vector<int>>(j, "support", where);
    g.gamma_C = net_from_json(detail::get_section(j, "gamma_C", where), where);
    g.lambda = detail::get_required<double>(j, "lambda", where);
    g.id = id;
    validate_generator(g);
    return g;
}

// ---------- dataset serialization ----------

inline json dataset_to_json(const Dataset& ds) {
    json instances = json::array();
    for (const Instance& inst : ds.instances) {
        json pts = json::array();
        for (const Point& p : inst.points) pts.push_back(json::array({p.x, p.y}));
        instances.push_back(std::move(pts));
    }
    return json{{"provenance",
                 json{{"lambda", ds.provenance.lambda},
                      {"scale", ds.provenance.scale},
                      {"seed", ds.provenance.seed},
                      {"count", ds.provenance.count}}},
                {"instances", std::move(instances)}};
}

inline Dataset dataset_from_json(const json& j) {
    const char* where = "dataset file";
    detail::require_keys(j, {"provenance", "instances"}, where);
    Dataset ds;
    const json& prov = detail::get_section(j, "provenance", where);
    detail::require_keys(prov, {"lambda", "scale", "seed", "count"}, where);
    ds.provenance.lambda = detail::get_required<double>(prov, "lambda", where);
    ds.provenance.scale = detail::get_required<int>(prov, "scale", where);
    ds.provenance.seed = detail::get_required<std::uint64_t>(prov, "seed", where);
    ds.provenance.count = detail::get_required<int>(prov, "count", where);
    for (const json& pts : detail::get_section(j, "instances", where)) {
        Instance inst;
        for (const json& p : pts) {
            if (!p.is_array() || p.size() != 2) throw ConfigError("dataset file: point must be [x, y]");
            inst.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        }
        check_instance_size(inst.n());
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

// ---------- config serialization ----------

inline json oracle_config_to_json(const OracleConfig& oc) {
    return json{{"exact_threshold", oc.exact_threshold}, {"restarts", oc.restarts}};
}

inline OracleConfig oracle_config_from_json(const json& j) {
    const char* where = "config.oracle";
    detail::require_keys(j, {"exact_threshold", "restarts"}, where);
    OracleConfig oc;
    oc.exact_threshold = detail::get_or(j, "exact_threshold", oc.exact_threshold, where);
    oc.restarts = detail::get_or(j, "restarts", oc.restarts, where);
    if (oc.exact_threshold < 3 || oc.exact_threshold > 18) {
        throw ConfigError("config.oracle: exact_threshold must be in [3, 18]");
    }
    if (oc.restarts < 1) throw ConfigError("config.oracle: restarts must be positive");
    return oc;
}

inline json psro_config_to_json(const PsroConfig& c) {
    return json{
        {"iterations", c.iterations},
        {"support", c.support},
        {"M", c.M},
        {"lambda", c.lambda},
        {"support_threshold", c.support_threshold},
        {"temperature", c.temperature},
        {"master_seed", c.master_seed},
        {"mode", psro_mode_name(c.mode)},
        {"threads", c.threads},
        {"oracle", oracle_config_to_json(c.solver.oracle)},
        {"solver",
         json{{"epochs", c.solver.epochs},
              {"batches_per_epoch", c.solver.batches_per_epoch},
              {"batch_size", c.solver.batch_size},
              {"lr", c.solver.lr},
              {"lr_decay", c.solver.lr_decay},
              {"weight_decay", c.solver.weight_decay},
              {"validation_size", c.solver.validation_size}}},
        {"generator",
         json{{"epochs", c.generator.epochs},
              {"batch_size", c.generator.batch_size},
              {"lr", c.generator.lr},
              {"lr_decay", c.generator.lr_decay},
              {"weight_decay", c.generator.weight_decay},
              {"eval_size", c.generator.eval_size}}},
    };
}

inline PsroConfig psro_config_from_json(const json& j) {
    const char* where = "config";
    detail::require_keys(j,
                         {"iterations", "support", "M", "lambda", "support_threshold", "temperature",
                          "master_seed", "mode", "threads", "oracle", "solver", "generator"},
                         where);
    PsroConfig c;
    c.iterations = detail::get_or(j, "iterations", c.iterations, where);
    c.support = detail::get_or(j, "support", c.support, where);
    c.M = detail::get_or(j, "M", c.M, where);
    c.lambda = detail::get_or(j, "lambda", c.lambda, where);
    c.support_threshold = detail::get_or(j, "support_threshold", c.support_threshold, where);
    c.temperature = detail::get_or(j, "temperature", c.temperature, where);
    c.master_seed = detail::get_or(j, "master_seed", c.master_seed, where);
    c.mode = psro_mode_from_name(detail::get_or<std::string>(j, "mode", psro_mode_name(c.mode), where));
    c.threads = detail::get_or(j, "threads", c.threads, where);
    if (j.contains("oracle")) {
        const OracleConfig oc = oracle_config_from_json(j.at("oracle"));
        c.solver.oracle = oc;
        c.generator.oracle = oc;
    }
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        detail::require_keys(s,
                             {"epochs", "batches_per_epoch", "batch_size", "lr", "lr_decay",
                              "weight_decay", "validation_size"},
                             "config.solver");
        c.solver.epochs = detail::get_or(s, "epochs", c.solver.epochs, where);
        c.solver.batches_per_epoch = detail::get_or(s, "batches_per_epoch", c.solver.batches_per_epoch, where);
        c.solver.batch_size = detail::get_or(s, "batch_size", c.solver.batch_size, where);
        c.solver.lr = detail::get_or(s, "lr", c.solver.lr, where);
        c.solver.lr_decay = detail::get_or(s, "lr_decay", c.solver.lr_decay, where);
        c.solver.weight_decay = detail::get_or(s, "weight_decay", c.solver.weight_decay, where);
        c.solver.validation_size = detail::get_or(s, "validation_size", c.solver.validation_size, where);
    }
    if (j.contains("generator")) {
        const json& g = j.at("generator");
        detail::require_keys(
            g, {"epochs", "batch_size", "lr", "lr_decay", "weight_decay", "eval_size"},
            "config.generator");
        c.generator.epochs = detail::get_or(g, "epochs", c.generator.epochs, where);
        c.generator.batch_size = detail::get_or(g, "batch_size", c.generator.batch_size, where);
        c.generator.lr = detail::get_or(g, "lr", c.generator.lr, where);
        c.generator.lr_decay = detail::get_or(g, "lr_decay", c.generator.lr_decay, where);
        c.generator.weight_decay = detail::get_or(g, "weight_decay", c.generator.weight_decay, where);
        c.generator.eval_size = detail::get_or(g, "eval_size", c.generator.eval_size, where);
    }
    validate_psro_config(c);
    return c;
}

// ---------- full run checkpoint ----------

inline json meta_game_to_json(const MetaGame& game) {
    json cells = json::array();
    for (int r = 0; r < game.rows; ++r) {
        for (int c = 0; c < game.cols; ++c) {
            const MetaCell& cell = game.at(r, c);
            cells.push_back(json{{"row", r},
                                 {"col", c},
                                 {"u", cell.u},
                                 {"stderr", cell.stderr_},
                                 {"M", cell.M},
                                 {"seed", cell.seed}});
        }
    }
    return json{{"rows", game.rows},
                {"cols", game.cols},
                {"row_ids", game.row_ids},
                {"col_ids", game.col_ids},
                {"cells", std::move(cells)}};
}

inline MetaGame meta_game_from_json(const json& j) {
    const char* where = "checkpoint.meta_table";
    detail::require_keys(j, {"rows", "cols", "row_ids", "col_ids", "cells"}, where);
    MetaGame game;
    game.rows = detail::get_required<int>(j, "rows", where);
    game.cols = detail::get_required<int>(j, "cols", where);
    game.row_ids = detail::get_required<std::vector<int>>(j, "row_ids", where);
    game.col_ids = detail::get_required<std::vector<int>>(j, "col_ids", where);
    game.cells.resize(static_cast<std::size_t>(game.rows) * static_cast<std::size_t>(game.cols));
    for (const json& cj : detail::get_section(j, "cells", where)) {
        detail::require_keys(cj, {"row", "col", "u", "stderr", "M", "seed"}, where);
        const int r = detail::get_required<int>(cj, "row", where);
        const int c = detail::get_required<int>(cj, "col", where);
        if (r < 0 || r >= game.rows || c < 0 || c >= game.cols) {
            throw ConfigError("checkpoint.meta_table: cell index out of range");
        }
        MetaCell& cell = game.at(r, c);
        cell.u = detail::get_required<double>(cj, "u", where);
        cell.stderr_ = detail::get_required<double>(cj, "stderr", where);
        cell.M = detail::get_required<int>(cj, "M", where);
        cell.seed = detail::get_required<std::uint64_t>(cj, "seed", where);
    }
    return game;
}

inline json checkpoint_to_json(const PopulationCheckpoint& cp) {
    json solvers = json::array();
    for (const SolverPolicy& s : cp.solvers) solvers.push_back(solver_to_json(s));
    json generators = json::array();
    for (const GeneratorPolicy& g : cp.generators) generators.push_back(generator_to_json(g));
    json iterations = json::array();
    for (const IterationRecord& rec : cp.iterations) {
        iterations.push_back(json{{"iteration", rec.iteration},
                                  {"sigma_ss", rec.sigma_ss.probs},
                                  {"sigma_dg", rec.sigma_dg.probs},
                                  {"game_value", rec.game_value},
                                  {"online_expl", rec.online_expl},
                                  {"retro_expl", rec.retro_expl},
                                  {"sparsity", rec.sparsity},
                                  {"solver_selected_epoch", rec.solver_selected_epoch},
                                  {"generator_selected_epoch", rec.generator_selected_epoch},
                                  {"solver_val_gaps", rec.solver_val_gaps},
                                  {"generator_eval_gaps", rec.generator_eval_gaps}});
    }
    return json{{"format", "tspsro-checkpoint-v1"},
                {"config", psro_config_to_json(cp.config)},
                {"solvers", std::move(solvers)},
                {"generators", std::move(generators)},
                {"meta_table", meta_game_to_json(cp.table)},
                {"iterations", std::move(iterations)},
                {"final", json{{"sigma_ss", cp.final_sigma_ss.probs},
                               {"sigma_dg", cp.final_sigma_dg.probs},
                               {"value", cp.final_value}}},
                {"complete", cp.complete},
                {"error", cp.error}};
}

inline PopulationCheckpoint checkpoint_from_json(const json& j) {
    const char* where = "checkpoint";
    detail::require_keys(j,
                         {"format", "config", "solvers", "generators", "meta_table", "iterations",
                          "final", "complete", "error"},
                         where);
    if (detail::get_required<std::string>(j, "format", where) != "tspsro-checkpoint-v1") {
        throw ConfigError("checkpoint: unknown format tag");
    }
    PopulationCheckpoint cp;
    cp.config = psro_config_from_json(detail::get_section(j, "config", where));
    int id = 0;
    for (const json& sj : detail::get_section(j, "solvers", where)) cp.solvers.push_back(solver_from_json(sj, id++));
    id = 0;
    for (const json& gj : detail::get_section(j, "generators", where)) cp.generators.push_back(generator_from_json(gj, id++));
    cp.table = meta_game_from_json(detail::get_section(j, "meta_table", where));
    for (const json& rj : detail::get_section(j, "iterations", where)) {
        detail::require_keys(rj,
                             {"iteration", "sigma_ss", "sigma_dg", "game_value", "online_expl",
                              "retro_expl", "sparsity", "solver_selected_epoch",
                              "generator_selected_epoch", "solver_val_gaps", "generator_eval_gaps"},
                             "checkpoint.iterations");
        IterationRecord rec;
        rec.iteration = detail::get_required<int>(rj, "iteration", where);
        rec.sigma_ss.probs = detail::get_required<std::vector<double>>(rj, "sigma_ss", where);
        rec.sigma_dg.probs = detail::get_required<std::vector<double>>(rj, "sigma_dg", where);
        rec.game_value = detail::get_required<double>(rj, "game_value", where);
        rec.online_expl = detail::get_required<double>(rj, "online_expl", where);
        rec.retro_expl = detail::get_required<double>(rj, "retro_expl", where);
        rec.sparsity = detail::get_required<double>(rj, "sparsity", where);
        rec.solver_selected_epoch = detail::get_required<int>(rj, "solver_selected_epoch", where);
        rec.generator_selected_epoch = detail::get_required<int>(rj, "generator_selected_epoch", where);
        rec.solver_val_gaps = detail::get_required<std::vector<double>>(rj, "solver_val_gaps", where);
        rec.generator_eval_gaps =
            detail::get_required<std::vector<double>>(rj, "generator_eval_gaps", where);
        cp.iterations.push_back(std::move(rec));
    }
    const json& fin = detail::get_section(j, "final", where);
    detail::require_keys(fin, {"sigma_ss", "sigma_dg", "value"}, "checkpoint.final");
    cp.final_sigma_ss.probs = detail::get_required<std::vector<double>>(fin, "sigma_ss", where);
    cp.final_sigma_dg.probs = detail::get_required<std::vector<double>>(fin, "sigma_dg", where);
    cp.final_value = detail::get_required<double>(fin, "value", where);
    cp.complete = detail::get_required<bool>(j, "complete", where);
    cp.error = detail::get_required<std::string>(j, "error", where);
    return cp;
}

// ---------- provenance hash + atomic persistence ----------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Identifies the experiment, not the execution: the thread count never
// affects any computed value, so it is excluded from the hash.
inline std::string config_hash_hex(const PsroConfig& c) {
    PsroConfig canonical = c;
    canonical.threads = 1;
    const std::uint64_t h = fnv1a64(psro_config_to_json(canonical).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Write-then-rename so readers never observe a torn file.
inline void save_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw MalformedFile("save_text_atomic: cannot open " + tmp.string());
        out << content;
        if (!out) throw MalformedFile("save_text_atomic: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string load_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedFile("load_text: cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

inline json parse_json_file(const std::filesystem::path& path) {
    const std::string text = load_text(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("JSON parse error in " + path.string());
    return j;
}

// ---------- CSV emitters ----------

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::string csv_provenance_line(std::uint64_t seed, const std::string& config_hash) {
    return "# seed=" + std::to_string(seed) + " config_hash=" + config_hash + "\n";
}

}  // namespace detail

inline std::string exploitability_csv(const PopulationCheckpoint& cp) {
    std::string out = detail::csv_provenance_line(cp.config.master_seed, config_hash_hex(cp.config));
    out += "iter,online_expl,retro_expl,game_value\n";
    for (const IterationRecord& rec : cp.iterations) {
        out += std::to_string(rec.iteration) + "," + detail::format_double(rec.online_expl) + "," +
               detail::format_double(rec.retro_expl) + "," + detail::format_double(rec.game_value) +
               "\n";
    }
    return out;
}

inline std::string metastrategy_csv(const PopulationCheckpoint& cp) {
    std::string out = detail::csv_provenance_line(cp.config.master_seed, config_hash_hex(cp.config));
    out += "iter,player,index,prob\n";
    for (const IterationRecord& rec : cp.iterations) {
        for (std::size_t i = 0; i < rec.sigma_ss.size(); ++i) {
            out += std::to_string(rec.iteration) + ",solver," + std::to_string(i) + "," +
                   detail::format_double(rec.sigma_ss.probs[i]) + "\n";
        }
        for (std::size_t i = 0; i < rec.sigma_dg.size(); ++i) {
            out += std::to_string(rec.iteration) + ",generator," + std::to_string(i) + "," +
                   detail::format_double(rec.sigma_dg.probs[i]) + "\n";
        }
    }
    return out;
}

inline std::string meta_table_csv(const MetaGame& game, std::uint64_t seed,
                                  const std::string& config_hash) {
    std::string out = detail::csv_provenance_line(seed, config_hash);
    out += "row_id,col_id,u,stderr,M,seed\n";
    for (int r = 0; r < game.rows; ++r) {
        for (int c = 0; c < game.cols; ++c) {
            const MetaCell& cell = game.at(r, c);
            out += std::to_string(game.row_ids[static_cast<std::size_t>(r)]) + "," +
                   std::to_string(game.col_ids[static_cast<std::size_t>(c)]) + "," +
                   detail::format_double(cell.u) + "," + detail::format_double(cell.stderr_) + "," +
                   std::to_string(cell.M) + "," + std::to_string(cell.seed) + "\n";
        }
    }
    return out;
}

inline std::string gaps_csv(const std::vector<std::pair<std::string, GapRow>>& rows,
                            std::uint64_t seed, const std::string& config_hash) {
    std::string out = detail::csv_provenance_line(seed, config_hash);
    out += "dataset_id,variant,k,mean_gap,stderr\n";
    for (const auto& [dataset_id, row] : rows) {
        out += dataset_id + "," + row.variant + "," + std::to_string(row.k) + "," +
               detail::format_double(row.stats.mean) + "," + detail::format_double(row.stats.stderr_) +
               "\n";
    }
    return out;
}

struct InstanceGapRow {
    std::string dataset_id;
    int instance_index = 0;
    double solver_length = 0.0;
    double oracle_length = 0.0;
    double gap = 0.0;
};

inline std::string instance_gaps_csv(const std::vector<InstanceGapRow>& rows, std::uint64_t seed,
                                     const std::string& config_hash) {
    std::string out = detail::csv_provenance_line(seed, config_hash);
    out += "dataset_id,instance,solver_length,oracle_length,gap\n";
    for (const InstanceGapRow& r : rows) {
        out += r.dataset_id + "," + std::to_string(r.instance_index) + "," +
               detail::format_double(r.solver_length) + "," + detail::format_double(r.oracle_length) +
               "," + detail::format_double(r.gap) + "\n";
    }
    return out;
}

inline std::string attack_curve_csv(const std::vector<double>& per_epoch_gaps, std::uint64_t seed,
                                    const std::string& config_hash) {
    std::string out = detail::csv_provenance_line(seed, config_hash);
    out += "epoch,gap\n";
    for (std::size_t e = 0; e < per_epoch_gaps.size(); ++e) {
        out += std::to_string(e) + "," + detail::format_double(per_epoch_gaps[e]) + "\n";
    }
    return out;
}

}  // namespace tspsro
