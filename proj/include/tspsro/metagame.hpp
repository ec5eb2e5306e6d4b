#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/generator.hpp"
#include "tspsro/mixed_strategy.hpp"
#include "tspsro/oracle.hpp"
#include "tspsro/rng.hpp"
#include "tspsro/solver.hpp"

namespace tspsro {

// One evaluated payoff-table entry: mean optimality gap over M instances.
struct MetaCell {
    double u = 0.0;
    double stderr_ = 0.0;
    int M = 0;
    std::uint64_t seed = 0;
};

// Empirical zero-sum table. Rows index solver policies (minimizing the gap),
// columns index generator policies (maximizing it); u is stored in GAP terms,
// so the row player's utility is -u and the column player's is +u.
struct MetaGame {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ids;
    std::vector<int> col_ids;
    std::vector<MetaCell> cells;  // row-major

    const MetaCell& at(int r, int c) const {
        return cells[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                     static_cast<std::size_t>(c)];
    }
    MetaCell& at(int r, int c) {
        return cells[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                     static_cast<std::size_t>(c)];
    }
    double u(int r, int c) const { return at(r, c).u; }
};

inline std::vector<std::vector<double>> gap_matrix(const MetaGame& game) {
    std::vector<std::vector<double>> U(static_cast<std::size_t>(game.rows));
    for (int r = 0; r < game.rows; ++r) {
        U[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(game.cols));
        for (int c = 0; c < game.cols; ++c) U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = game.u(r, c);
    }
    return U;
}

// Mean gap and its standard error for an arbitrary solve function against a
// generator's instance distribution. The tour-length callable seam lets
// tests plug the oracle itself in as the "solver".
inline MetaCell evaluate_cell_fn(const std::function<double(const Instance&)>& solver_len_fn,
                                 const GeneratorPolicy& P, int M, Rng& rng,
                                 const OracleConfig& oracle_config = {}) {
    if (M < 1) throw InvalidParameter("evaluate_cell: M must be >= 1");
    std::vector<double> gaps(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        const ScaleSample scale = sample_scale(P, rng);
        const AttackSample s = sample_attacked_with_retry(P, scale.n, rng);
        const double solver_len = solver_len_fn(s.attacked);
        const OracleResult oracle = oracle_for(s.attacked, oracle_config);
        gaps[static_cast<std::size_t>(m)] = optimality_gap(solver_len, oracle.length);
    }
    MetaCell cell;
    cell.M = M;
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(M);
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    cell.u = mean;
    cell.stderr_ = M > 1 ? std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
    return cell;
}

inline MetaCell evaluate_cell(const SolverPolicy& S, const GeneratorPolicy& P, int M, Rng& rng,
                              const OracleConfig& oracle_config = {}) {
    return evaluate_cell_fn([&S](const Instance& inst) { return greedy_length(S, inst); }, P, M,
                            rng, oracle_config);
}

struct FillResult {
    MetaGame game;
    int cells_evaluated = 0;
};

// Expands `existing` (a top-left sub-block) to the full population sizes,
// evaluating only the missing cells. Each cell draws from its own rng seeded
// by (master_seed, row, col), so old entries are reproduced bit-exactly and
// thread count cannot change any value.
inline FillResult fill_meta_table(const std::vector<SolverPolicy>& solvers,
                                  const std::vector<GeneratorPolicy>& generators,
                                  const MetaGame& existing, int M, std::uint64_t master_seed,
                                  int threads = 1, const OracleConfig& oracle_config = {}) {
    const int R = static_cast<int>(solvers.size());
    const int C = static_cast<int>(generators.size());
    if (R == 0 || C == 0) throw EmptyPopulation("fill_meta_table: empty population");
    if (existing.rows > R || existing.cols > C) {
        throw InvalidExpansion("fill_meta_table: existing table larger than populations");
    }
    FillResult result;
    MetaGame& game = result.game;
    game.rows = R;
    game.cols = C;
    game.row_ids.resize(static_cast<std::size_t>(R));
    game.col_ids.resize(static_cast<std::size_t>(C));
    for (int r = 0; r < R; ++r) game.row_ids[static_cast<std::size_t>(r)] = solvers[static_cast<std::size_t>(r)].id;
    for (int c = 0; c < C; ++c) game.col_ids[static_cast<std::size_t>(c)] = generators[static_cast<std::size_t>(c)].id;
    game.cells.resize(static_cast<std::size_t>(R) * static_cast<std::size_t>(C));

    std::vector<std::pair<int, int>> missing;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (r < existing.rows && c < existing.cols) {
                game.at(r, c) = existing.at(r, c);
            } else {
                missing.emplace_back(r, c);
            }
        }
    }
    result.cells_evaluated = static_cast<int>(missing.size());

    auto eval_one = [&](const std::pair<int, int>& rc) {
        const std::uint64_t seed = derive_seed(master_seed, static_cast<std::uint64_t>(rc.first),
                                               static_cast<std::uint64_t>(rc.second));
        Rng rng(seed);
        MetaCell cell = evaluate_cell(solvers[static_cast<std::size_t>(rc.first)],
                                      generators[static_cast<std::size_t>(rc.second)], M, rng,
                                      oracle_config);
        cell.seed = seed;
        game.at(rc.first, rc.second) = cell;
    };

    if (threads <= 1 || missing.size() <= 1) {
        for (const auto& rc : missing) eval_one(rc);
    } else {
        const int workers = std::min<int>(threads, static_cast<int>(missing.size()));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t k = static_cast<std::size_t>(w); k < missing.size();
                     k += static_cast<std::size_t>(workers)) {
                    eval_one(missing[k]);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }
    return result;
}

enum class Player { solver_selector, data_generator };

// Pure best response within the existing populations: SS picks the row
// minimizing the expected gap, DG the column maximizing it. Value is the
// chosen row/column's expected gap against the opponent mixture. Ties go to
// the lowest index.
inline std::pair<int, double> best_response_restricted(const std::vector<std::vector<double>>& U,
                                                       const MixedStrategy& opponent, Player player) {
    const int R = static_cast<int>(U.size());
    if (R == 0 || U[0].empty()) throw EmptyPopulation("best_response_restricted: empty table");
    const int C = static_cast<int>(U[0].size());
    if (player == Player::solver_selector) {
        if (static_cast<int>(opponent.size()) != C) {
            throw InvalidWeights("best_response_restricted: opponent size mismatch");
        }
        validate_simplex(opponent.probs, 1e-9, "best_response_restricted");
        int best = 0;
        double best_val = std::numeric_limits<double>::infinity();
        for (int r = 0; r < R; ++r) {
            double v = 0.0;
            for (int c = 0; c < C; ++c) v += U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * opponent.probs[static_cast<std::size_t>(c)];
            if (v < best_val) {
                best_val = v;
                best = r;
            }
        }
        return {best, best_val};
    }
    if (static_cast<int>(opponent.size()) != R) {
        throw InvalidWeights("best_response_restricted: opponent size mismatch");
    }
    validate_simplex(opponent.probs, 1e-9, "best_response_restricted");
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) {
        double v = 0.0;
        for (int r = 0; r < R; ++r) v += opponent.probs[static_cast<std::size_t>(r)] * U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (v > best_val) {
            best_val = v;
            best = c;
        }
    }
    return {best, best_val};
}

// Average benefit of deviating to a table best response, in utility terms
// (row utility = -gap, column utility = +gap):
//   1/2 [ max_c sigma_SS' U e_c  -  min_r e_r' U sigma_DG ].
// Non-negative for every profile; zero exactly at a table equilibrium.
// Values above -1e-9 that round negative are clamped to 0.
inline double exploitability(const std::vector<std::vector<double>>& U, const MixedStrategy& sigma_ss,
                             const MixedStrategy& sigma_dg) {
    const auto dg_br = best_response_restricted(U, sigma_ss, Player::data_generator);
    const auto ss_br = best_response_restricted(U, sigma_dg, Player::solver_selector);
    const double value = 0.5 * (dg_br.second - ss_br.second);
    if (value < 0.0) {
        if (value < -1e-9) return value;  // genuine violation; let the caller see it
        return 0.0;
    }
    return value;
}

struct NashSolution {
    MixedStrategy sigma_ss;
    MixedStrategy sigma_dg;
    double value = 0.0;  // game value in gap terms
};

namespace detail {

struct MatrixGameSolution {
    std::vector<double> row;  // maximizing player's mixture
    std::vector<double> col;  // minimizing player's mixture
    double value = 0.0;
};

// Minimax LP for a row-maximizer matrix game, via the classic scaling trick:
// shift A positive, solve max 1'y s.t. A y <= 1, y >= 0 with a dense
// tableau simplex (Bland's rule). y recovers the column player's mixture,
// the duals under the slack columns recover the row player's.
inline MatrixGameSolution solve_matrix_game_lp(const std::vector<std::vector<double>>& A) {
    const int m = static_cast<int>(A.size());
    const int n = static_cast<int>(A[0].size());
    double min_entry = A[0][0];
    for (const auto& row : A)
        for (double v : row) min_entry = std::min(min_entry, v);
    const double K = 1.0 - min_entry;  // shifted entries lie in [1, ...)

    // Tableau: m rows x (n variables + m slacks + rhs); objective row last.
    const int width = n + m + 1;
    std::vector<std::vector<double>> T(static_cast<std::size_t>(m),
                                       std::vector<double>(static_cast<std::size_t>(width), 0.0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) T[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] + K;
        T[static_cast<std::size_t>(i)][static_cast<std::size_t>(n + i)] = 1.0;
        T[static_cast<std::size_t>(i)][static_cast<std::size_t>(width - 1)] = 1.0;
    }
    std::vector<double> z(static_cast<std::size_t>(width), 0.0);
    for (int j = 0; j < n; ++j) z[static_cast<std::size_t>(j)] = -1.0;  // maximize sum y
    std::vector<int> basis(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;

    const double eps = 1e-11;
    const int max_pivots = 10000 * (m + n);
    for (int pivot_count = 0;; ++pivot_count) {
        if (pivot_count > max_pivots) throw SolveError("solve_matrix_game_lp: pivot limit exceeded");
        // Bland: entering variable = lowest index with negative reduced cost.
        int enter = -1;
        for (int j = 0; j < n + m; ++j) {
            if (z[static_cast<std::size_t>(j)] < -eps) {
                enter = j;
                break;
            }
        }
        if (enter < 0) break;  // optimal
        // Ratio test; ties resolved by lowest basis variable index (Bland).
        int leave = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m; ++i) {
            const double a = T[static_cast<std::size_t>(i)][static_cast<std::size_t>(enter)];
            if (a > eps) {
                const double ratio = T[static_cast<std::size_t>(i)][static_cast<std::size_t>(width - 1)] / a;
                if (leave < 0 || ratio < best_ratio - eps ||
                    (std::abs(ratio - best_ratio) <= eps &&
                     basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
                    leave = i;
                    best_ratio = ratio;
                }
            }
        }
        if (leave < 0) throw SolveError("solve_matrix_game_lp: unbounded LP");
        // Pivot.
        std::vector<double>& prow = T[static_cast<std::size_t>(leave)];
        const double pval = prow[static_cast<std::size_t>(enter)];
        for (double& v : prow) v /= pval;
        for (int i = 0; i < m; ++i) {
            if (i == leave) continue;
            std::vector<double>& row = T[static_cast<std::size_t>(i)];
            const double f = row[static_cast<std::size_t>(enter)];
            if (f == 0.0) continue;
            for (int j = 0; j < width; ++j) row[static_cast<std::size_t>(j)] -= f * prow[static_cast<std::size_t>(j)];
        }
        const double zf = z[static_cast<std::size_t>(enter)];
        if (zf != 0.0) {
            for (int j = 0; j < width; ++j) z[static_cast<std::size_t>(j)] -= zf * prow[static_cast<std::size_t>(j)];
        }
        basis[static_cast<std::size_t>(leave)] = enter;
    }

    std::vector<double> y(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < m; ++i) {
        if (basis[static_cast<std::size_t>(i)] < n) {
            y[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])] =
                T[static_cast<std::size_t>(i)][static_cast<std::size_t>(width - 1)];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) x[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(n + i)];

    double sum_y = 0.0;
    for (double v : y) sum_y += v;
    if (!(sum_y > 0.0)) throw SolveError("solve_matrix_game_lp: degenerate objective");
    MatrixGameSolution sol;
    sol.value = 1.0 / sum_y - K;
    sol.col.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) sol.col[static_cast<std::size_t>(j)] = std::max(0.0, y[static_cast<std::size_t>(j)]) / sum_y;
    double sum_x = 0.0;
    for (double v : x) sum_x += std::max(0.0, v);
    if (!(sum_x > 0.0)) throw SolveError("solve_matrix_game_lp: degenerate duals");
    sol.row.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) sol.row[static_cast<std::size_t>(i)] = std::max(0.0, x[static_cast<std::size_t>(i)]) / sum_x;
    // Tidy both mixtures to exact simplex membership.
    auto renorm = [](std::vector<double>& p) {
        double s = 0.0;
        for (double v : p) s += v;
        for (double& v : p) v /= s;
    };
    renorm(sol.row);
    renorm(sol.col);
    return sol;
}

// Regret-matching+ with linear averaging; fallback when the LP misbehaves.
// Stops once the duality gap (max column payoff vs min row payoff for the
// averaged profile) drops below `gap_tol`.
inline MatrixGameSolution solve_matrix_game_rm(const std::vector<std::vector<double>>& U,
                                               double gap_tol = 1e-6, long max_iters = 4000000) {
    const int R = static_cast<int>(U.size());
    const int C = static_cast<int>(U[0].size());
    // Here U is in gap terms: row player minimizes, column player maximizes.
    std::vector<double> regret_row(static_cast<std::size_t>(R), 0.0);
    std::vector<double> regret_col(static_cast<std::size_t>(C), 0.0);
    std::vector<double> avg_row(static_cast<std::size_t>(R), 0.0);
    std::vector<double> avg_col(static_cast<std::size_t>(C), 0.0);
    std::vector<double> cur_row(static_cast<std::size_t>(R), 1.0 / R);
    std::vector<double> cur_col(static_cast<std::size_t>(C), 1.0 / C);

    auto positive_normalize = [](const std::vector<double>& regret, std::vector<double>& out) {
        double s = 0.0;
        for (double v : regret) s += std::max(0.0, v);
        if (s <= 0.0) {
            const double u = 1.0 / static_cast<double>(out.size());
            for (double& v : out) v = u;
        } else {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, regret[i]) / s;
        }
    };

    MatrixGameSolution sol;
    for (long t = 1; t <= max_iters; ++t) {
        // Alternating regret-matching+ with linear averaging: the column
        // player reacts to the row player's freshly updated mix within the
        // same sweep, which closes the duality gap far faster than
        // simultaneous updates.
        std::vector<double> row_payoff(static_cast<std::size_t>(R), 0.0);  // gap if SS plays r
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                row_payoff[static_cast<std::size_t>(r)] += U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * cur_col[static_cast<std::size_t>(c)];
            }
        double row_value = 0.0;
        for (int r = 0; r < R; ++r) row_value += cur_row[static_cast<std::size_t>(r)] * row_payoff[static_cast<std::size_t>(r)];
        for (int r = 0; r < R; ++r) {
            regret_row[static_cast<std::size_t>(r)] =
                std::max(0.0, regret_row[static_cast<std::size_t>(r)] + (row_value - row_payoff[static_cast<std::size_t>(r)]));
        }
        positive_normalize(regret_row, cur_row);

        std::vector<double> col_payoff(static_cast<std::size_t>(C), 0.0);  // gap if DG plays c
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                col_payoff[static_cast<std::size_t>(c)] += U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * cur_row[static_cast<std::size_t>(r)];
            }
        double col_value = 0.0;
        for (int c = 0; c < C; ++c) col_value += cur_col[static_cast<std::size_t>(c)] * col_payoff[static_cast<std::size_t>(c)];
        for (int c = 0; c < C; ++c) {
            regret_col[static_cast<std::size_t>(c)] =
                std::max(0.0, regret_col[static_cast<std::size_t>(c)] + (col_payoff[static_cast<std::size_t>(c)] - col_value));
        }
        positive_normalize(regret_col, cur_col);

        const double w = static_cast<double>(t);
        for (int r = 0; r < R; ++r) avg_row[static_cast<std::size_t>(r)] += w * cur_row[static_cast<std::size_t>(r)];
        for (int c = 0; c < C; ++c) avg_col[static_cast<std::size_t>(c)] += w * cur_col[static_cast<std::size_t>(c)];

        if (t % 1000 == 0 || t == max_iters) {
            std::vector<double> srow = avg_row;
            std::vector<double> scol = avg_col;
            double s1 = 0.0;
            for (double v : srow) s1 += v;
            for (double& v : srow) v /= s1;
            double s2 = 0.0;
            for (double v : scol) s2 += v;
            for (double& v : scol) v /= s2;
            double worst_col = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) {
                double v = 0.0;
                for (int r = 0; r < R; ++r) v += srow[static_cast<std::size_t>(r)] * U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                worst_col = std::max(worst_col, v);
            }
            double best_row = std::numeric_limits<double>::infinity();
            for (int r = 0; r < R; ++r) {
                double v = 0.0;
                for (int c = 0; c < C; ++c) v += U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * scol[static_cast<std::size_t>(c)];
                best_row = std::min(best_row, v);
            }
            if (worst_col - best_row <= gap_tol) {
                sol.row = std::move(scol);  // DG mixture (maximizer) — see caller mapping
                sol.col = std::move(srow);  // SS mixture
                sol.value = 0.5 * (worst_col + best_row);
                return sol;
            }
        }
    }
    throw SolveError("solve_matrix_game_rm: duality gap not closed within iteration budget");
}

}  // namespace detail

// Nash equilibrium of the table game: SS minimizes sigma_SS' U sigma_DG, DG
// maximizes it. LP first; regret matching as fallback; SolveError if both
// fail to reach restricted exploitability <= 1e-6.
inline NashSolution solve_zero_sum(const std::vector<std::vector<double>>& U) {
    const int R = static_cast<int>(U.size());
    if (R == 0 || U[0].empty()) throw EmptyPopulation("solve_zero_sum: empty table");
    const int C = static_cast<int>(U[0].size());
    for (const auto& row : U) {
        if (static_cast<int>(row.size()) != C) throw ShapeError("solve_zero_sum: ragged table");
        for (double v : row) {
            if (!std::isfinite(v)) throw InvalidParameter("solve_zero_sum: non-finite entry");
        }
    }

    auto finish = [&U](std::vector<double> ss, std::vector<double> dg, double value) {
        NashSolution sol;
        sol.sigma_ss.probs = std::move(ss);
        sol.sigma_dg.probs = std::move(dg);
        sol.value = value;
        if (exploitability(U, sol.sigma_ss, sol.sigma_dg) > 1e-6) {
            throw SolveError("solve_zero_sum: candidate profile not an equilibrium");
        }
        return sol;
    };

    // DG is the row maximizer of U transposed.
    std::vector<std::vector<double>> A(static_cast<std::size_t>(C),
                                       std::vector<double>(static_cast<std::size_t>(R)));
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) A[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = U[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    try {
        detail::MatrixGameSolution lp = detail::solve_matrix_game_lp(A);
        return finish(std::move(lp.col), std::move(lp.row), lp.value);
    } catch (const SolveError&) {
        detail::MatrixGameSolution rm = detail::solve_matrix_game_rm(U);
        return finish(std::move(rm.col), std::move(rm.row), rm.value);
    }
}

inline NashSolution solve_zero_sum(const MetaGame& game) { return solve_zero_sum(gap_matrix(game)); }

// Worst-case (over generator columns) expected gap of a row mixture — the
// minimax yardstick used for mixed-vs-pure dominance checks.
inline double worst_case_column_gap(const std::vector<std::vector<double>>& U,
                                    const std::vector<double>& row_weights) {
    if (U.empty() || U[0].empty()) throw EmptyPopulation("worst_case_column_gap: empty table");
    if (row_weights.size() != U.size()) throw InvalidWeights("worst_case_column_gap: weight size mismatch");
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < U[0].size(); ++c) {
        double v = 0.0;
        for (std::size_t r = 0; r < U.size(); ++r) v += row_weights[r] * U[r][c];
        worst = std::max(worst, v);
    }
    return worst;
}

}  // namespace tspsro
