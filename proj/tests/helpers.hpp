// Shared test utilities: finite-difference checking, an independent
// support-enumeration solver for zero-sum matrix games, Simpson quadrature,
// reference TSPLIB data, and plumbing for driving the CLI binary.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "tspsro/rng.hpp"

namespace testutil {

// Relative error with a floor so comparisons near zero stay meaningful.
inline double rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) /
           std::max({std::abs(analytic), std::abs(fd), 1e-6});
}

// Central finite difference of f with respect to params[i].
template <typename F>
double central_diff(F&& f, std::vector<double>& params, std::size_t i, double h) {
    const double orig = params[i];
    params[i] = orig + h;
    const double fp = f();
    params[i] = orig - h;
    const double fm = f();
    params[i] = orig;
    return (fp - fm) / (2.0 * h);
}

// Worst relative error of an analytic gradient against central differences,
// checked component by component.
template <typename F>
double max_grad_rel_err(F&& f, std::vector<double>& params, const std::vector<double>& analytic,
                        double h) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double fd = central_diff(f, params, i, h);
        worst = std::max(worst, rel_err(analytic[i], fd));
    }
    return worst;
}

// Composite Simpson's rule with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, int panels) {
    if (panels % 2 != 0) ++panels;
    const double h = (b - a) / panels;
    double sum = f(a) + f(b);
    for (int i = 1; i < panels; ++i) {
        sum += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return sum * h / 3.0;
}

// ---------------------------------------------------------------------------
// Independent zero-sum matrix game solver by support enumeration.
//
// A is the payoff to the ROW MAXIMIZER. For each pair of equal-size supports
// (R, C) it solves the indifference systems for the column strategy y (rows in
// R indifferent) and the row strategy x (columns in C indifferent), then
// checks feasibility and that neither player gains by leaving the support.
// Every nondegenerate zero-sum game has such an equilibrium, and the value is
// unique, so the first hit is the game value.
// ---------------------------------------------------------------------------

// Gaussian elimination with partial pivoting; false when singular.
inline bool solve_linear(std::vector<std::vector<double>> a, std::vector<double> b,
                         std::vector<double>& x) {
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double factor = a[r][col] / a[col][col];
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
            b[r] -= factor * b[col];
        }
    }
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return true;
}

struct SupportEnumSolution {
    double value = 0.0;
    std::vector<double> row_strategy;
    std::vector<double> col_strategy;
};

inline std::optional<SupportEnumSolution> support_enum_solve(
    const std::vector<std::vector<double>>& A) {
    const int m = static_cast<int>(A.size());
    const int n = static_cast<int>(A[0].size());
    const double tol = 1e-9;

    std::vector<std::vector<int>> row_subsets_by_size(static_cast<std::size_t>(m) + 1);
    for (int mask = 1; mask < (1 << m); ++mask) {
        row_subsets_by_size[static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)))]
            .push_back(mask);
    }
    std::vector<std::vector<int>> col_subsets_by_size(static_cast<std::size_t>(n) + 1);
    for (int mask = 1; mask < (1 << n); ++mask) {
        col_subsets_by_size[static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)))]
            .push_back(mask);
    }

    for (int k = 1; k <= std::min(m, n); ++k) {
        for (int rmask : row_subsets_by_size[static_cast<std::size_t>(k)]) {
            std::vector<int> R;
            for (int i = 0; i < m; ++i) {
                if (rmask & (1 << i)) R.push_back(i);
            }
            for (int cmask : col_subsets_by_size[static_cast<std::size_t>(k)]) {
                std::vector<int> C;
                for (int j = 0; j < n; ++j) {
                    if (cmask & (1 << j)) C.push_back(j);
                }

                // Column strategy y over C and value v: rows in R indifferent.
                // Unknowns [y_0..y_{k-1}, v].
                std::vector<std::vector<double>> ay(static_cast<std::size_t>(k) + 1,
                                                    std::vector<double>(static_cast<std::size_t>(k) + 1, 0.0));
                std::vector<double> by(static_cast<std::size_t>(k) + 1, 0.0);
                for (int r = 0; r < k; ++r) {
                    for (int c = 0; c < k; ++c) {
                        ay[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                            A[static_cast<std::size_t>(R[static_cast<std::size_t>(r)])]
                             [static_cast<std::size_t>(C[static_cast<std::size_t>(c)])];
                    }
                    ay[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = -1.0;
                }
                for (int c = 0; c < k; ++c) ay[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = 1.0;
                by[static_cast<std::size_t>(k)] = 1.0;
                std::vector<double> sol_y;
                if (!solve_linear(ay, by, sol_y)) continue;
                const double v = sol_y[static_cast<std::size_t>(k)];
                bool ok = true;
                for (int c = 0; c < k && ok; ++c) ok = sol_y[static_cast<std::size_t>(c)] >= -tol;
                if (!ok) continue;
                // Rows off support must not beat v.
                for (int i = 0; i < m && ok; ++i) {
                    if (rmask & (1 << i)) continue;
                    double payoff = 0.0;
                    for (int c = 0; c < k; ++c) {
                        payoff += A[static_cast<std::size_t>(i)]
                                   [static_cast<std::size_t>(C[static_cast<std::size_t>(c)])] *
                                  sol_y[static_cast<std::size_t>(c)];
                    }
                    ok = payoff <= v + tol;
                }
                if (!ok) continue;

                // Row strategy x over R and value w: columns in C indifferent.
                std::vector<std::vector<double>> ax(static_cast<std::size_t>(k) + 1,
                                                    std::vector<double>(static_cast<std::size_t>(k) + 1, 0.0));
                std::vector<double> bx(static_cast<std::size_t>(k) + 1, 0.0);
                for (int c = 0; c < k; ++c) {
                    for (int r = 0; r < k; ++r) {
                        ax[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
                            A[static_cast<std::size_t>(R[static_cast<std::size_t>(r)])]
                             [static_cast<std::size_t>(C[static_cast<std::size_t>(c)])];
                    }
                    ax[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] = -1.0;
                }
                for (int r = 0; r < k; ++r) ax[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] = 1.0;
                bx[static_cast<std::size_t>(k)] = 1.0;
                std::vector<double> sol_x;
                if (!solve_linear(ax, bx, sol_x)) continue;
                const double w = sol_x[static_cast<std::size_t>(k)];
                ok = std::abs(v - w) <= 1e-7;
                for (int r = 0; r < k && ok; ++r) ok = sol_x[static_cast<std::size_t>(r)] >= -tol;
                if (!ok) continue;
                // Columns off support must not pay the row player less than w.
                for (int j = 0; j < n && ok; ++j) {
                    if (cmask & (1 << j)) continue;
                    double payoff = 0.0;
                    for (int r = 0; r < k; ++r) {
                        payoff += A[static_cast<std::size_t>(R[static_cast<std::size_t>(r)])]
                                   [static_cast<std::size_t>(j)] *
                                  sol_x[static_cast<std::size_t>(r)];
                    }
                    ok = payoff >= w - tol;
                }
                if (!ok) continue;

                SupportEnumSolution out;
                out.value = v;
                out.row_strategy.assign(static_cast<std::size_t>(m), 0.0);
                out.col_strategy.assign(static_cast<std::size_t>(n), 0.0);
                for (int r = 0; r < k; ++r) {
                    out.row_strategy[static_cast<std::size_t>(R[static_cast<std::size_t>(r)])] =
                        std::max(0.0, sol_x[static_cast<std::size_t>(r)]);
                }
                for (int c = 0; c < k; ++c) {
                    out.col_strategy[static_cast<std::size_t>(C[static_cast<std::size_t>(c)])] =
                        std::max(0.0, sol_y[static_cast<std::size_t>(c)]);
                }
                return out;
            }
        }
    }
    return std::nullopt;
}

inline std::vector<std::vector<double>> random_table(tspsro::Rng& rng, int rows, int cols,
                                                     double lo = 0.0, double hi = 1.0) {
    std::vector<std::vector<double>> t(static_cast<std::size_t>(rows),
                                       std::vector<double>(static_cast<std::size_t>(cols), 0.0));
    for (auto& row : t) {
        for (double& v : row) v = rng.uniform(lo, hi);
    }
    return t;
}

// Transpose, for switching which player the row index refers to.
inline std::vector<std::vector<double>> transpose(const std::vector<std::vector<double>>& a) {
    std::vector<std::vector<double>> t(a[0].size(), std::vector<double>(a.size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
    }
    return t;
}

// ---------------------------------------------------------------------------
// Reference TSPLIB data (52-city instance with known best tour length 7542
// under the TSPLIB rounded metric).
// ---------------------------------------------------------------------------

inline std::string berlin52_text() {
    return R"(NAME : berlin52
COMMENT : 52 locations in Berlin
TYPE : TSP
DIMENSION : 52
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 565.0 575.0
2 25.0 185.0
3 345.0 750.0
4 945.0 685.0
5 845.0 655.0
6 880.0 660.0
7 25.0 230.0
8 525.0 1000.0
9 580.0 1175.0
10 650.0 1130.0
11 1605.0 620.0
12 1220.0 580.0
13 1465.0 200.0
14 1530.0 5.0
15 845.0 680.0
16 725.0 370.0
17 145.0 665.0
18 415.0 635.0
19 510.0 875.0
20 560.0 365.0
21 300.0 465.0
22 520.0 585.0
23 480.0 415.0
24 835.0 625.0
25 975.0 580.0
26 1215.0 245.0
27 1320.0 315.0
28 1250.0 400.0
29 660.0 180.0
30 410.0 250.0
31 420.0 555.0
32 575.0 665.0
33 1150.0 1160.0
34 700.0 580.0
35 685.0 595.0
36 685.0 610.0
37 770.0 610.0
38 795.0 645.0
39 720.0 635.0
40 760.0 650.0
41 475.0 960.0
42 95.0 260.0
43 875.0 920.0
44 700.0 500.0
45 555.0 815.0
46 830.0 485.0
47 1170.0 65.0
48 830.0 610.0
49 605.0 625.0
50 595.0 360.0
51 1340.0 725.0
52 1740.0 245.0
EOF
)";
}

inline std::string unit_square_tsplib() {
    return "NAME : square\nTYPE : TSP\nDIMENSION : 4\nEDGE_WEIGHT_TYPE : EUC_2D\n"
           "NODE_COORD_SECTION\n1 0.0 0.0\n2 1.0 0.0\n3 1.0 1.0\n4 0.0 1.0\nEOF\n";
}

// ---------------------------------------------------------------------------
// Filesystem + subprocess plumbing.
// ---------------------------------------------------------------------------

// Unique scratch directory, removed on destruction.
class TempDir {
   public:
    TempDir() {
        static int counter = 0;
        const auto base = std::filesystem::temp_directory_path();
        do {
            path_ = base / ("tspsro_test_" + std::to_string(::getpid()) + "_" +
                            std::to_string(counter++));
        } while (std::filesystem::exists(path_));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

   private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

// Runs the CLI under test; `cli_bin` is the executable path.
inline CliResult run_cli(const std::string& cli_bin, const std::string& args) {
    CliResult result;
    const std::string cmd = cli_bin + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return result;
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) {
        result.output.append(buf, got);
    }
    const int status = ::pclose(pipe);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

inline std::string cli_bin_from_env() {
    const char* bin = std::getenv("TSPSRO_CLI_BIN");
    return bin ? std::string(bin) : std::string();
}

}  // namespace testutil
