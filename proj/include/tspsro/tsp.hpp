#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/rng.hpp"

namespace tspsro {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point& a, const Point& b) {
        return a.x == b.x && a.y == b.y;
    }
};

// A TSP instance: n two-dimensional coordinates. Normalized instances live
// in the unit square.
struct Instance {
    std::vector<Point> points;

    int n() const { return static_cast<int>(points.size()); }

    friend bool operator==(const Instance& a, const Instance& b) {
        return a.points == b.points;
    }
};

// A closed tour, stored as a permutation of 0..n-1.
struct Tour {
    std::vector<int> order;

    int n() const { return static_cast<int>(order.size()); }
};

inline double distance(const Point& a, const Point& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

inline bool is_permutation_tour(const Tour& tour, int n) {
    if (tour.n() != n) return false;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int city : tour.order) {
        if (city < 0 || city >= n || seen[static_cast<std::size_t>(city)]) return false;
        seen[static_cast<std::size_t>(city)] = 1;
    }
    return true;
}

// Total Euclidean length of the closed cycle, including the edge back to
// the first city.
inline double tour_length(const Instance& inst, const Tour& tour) {
    const int n = inst.n();
    if (tour.n() != n) {
        throw SizeMismatch("tour_length: tour has " + std::to_string(tour.n()) +
                           " cities, instance has " + std::to_string(n));
    }
    if (!is_permutation_tour(tour, n)) {
        throw SizeMismatch("tour_length: tour is not a permutation of 0.." +
                           std::to_string(n - 1));
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        total += distance(inst.points[static_cast<std::size_t>(tour.order[static_cast<std::size_t>(i)])],
                          inst.points[static_cast<std::size_t>(tour.order[static_cast<std::size_t>((i + 1) % n)])]);
    }
    return total;
}

inline void check_instance_size(int n) {
    if (n < 3) throw InvalidScale("instance needs at least 3 points, got " + std::to_string(n));
}

// Min-max normalization over all scalar coordinate values of the instance
// (both axes pooled). The minimum coordinate maps to 0 and the maximum to 1;
// applying it twice is a bit-exact no-op.
inline Instance normalize(const Instance& inst, double eps = 1e-12) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Point& p : inst.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw DegenerateInstance("normalize: non-finite coordinate");
        }
        lo = std::min(lo, std::min(p.x, p.y));
        hi = std::max(hi, std::max(p.x, p.y));
    }
    const double range = hi - lo;
    if (!(range > eps)) {
        throw DegenerateInstance("normalize: coordinate range " + std::to_string(range) +
                                 " below " + std::to_string(eps));
    }
    Instance out;
    out.points.reserve(inst.points.size());
    for (const Point& p : inst.points) {
        out.points.push_back({(p.x - lo) / range, (p.y - lo) / range});
    }
    return out;
}

// n i.i.d. points uniform on the unit square.
inline Instance generate_uniform(int n, Rng& rng) {
    check_instance_size(n);
    Instance inst;
    inst.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform01();
        const double y = rng.uniform01();
        inst.points.push_back({x, y});
    }
    return inst;
}

struct Provenance {
    double lambda = 0.0;
    int scale = 0;
    std::uint64_t seed = 0;
    int count = 0;
};

struct Dataset {
    std::vector<Instance> instances;
    Provenance provenance;
};

// Benchmark generator: each point is z = x + y with x uniform on the unit
// square and y zero-mean Gaussian noise. One diagonal covariance is drawn
// per instance, entries uniform on [0, lambda], and the result is min-max
// normalized. Draw order per instance is pinned: the two variance entries,
// then per point (x, y, eps_x, eps_y).
inline Dataset generate_benchmark(int n, double lambda, int count, Rng& rng,
                                  std::uint64_t seed_for_provenance = 0) {
    check_instance_size(n);
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw InvalidParameter("generate_benchmark: lambda must be in [0,1], got " +
                               std::to_string(lambda));
    }
    if (count < 1) throw InvalidParameter("generate_benchmark: count must be positive");
    Dataset ds;
    ds.provenance = {lambda, n, seed_for_provenance, count};
    ds.instances.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const double var_x = lambda * rng.uniform01();
        const double var_y = lambda * rng.uniform01();
        const double sd_x = std::sqrt(var_x);
        const double sd_y = std::sqrt(var_y);
        Instance inst;
        inst.points.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double x = rng.uniform01();
            const double y = rng.uniform01();
            const double ex = rng.normal01();
            const double ey = rng.normal01();
            inst.points.push_back({x + sd_x * ex, y + sd_y * ey});
        }
        ds.instances.push_back(normalize(inst));
    }
    return ds;
}

// --- TSPLIB (EUC_2D subset) ------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Splits "KEY : value" / "KEY: value" headers.
inline bool split_header(const std::string& line, std::string& key, std::string& value) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) return false;
    key = trim(line.substr(0, colon));
    value = trim(line.substr(colon + 1));
    return true;
}

}  // namespace detail

// Parses the EUC_2D subset of the TSPLIB format. Coordinates are read as
// floats and are NOT normalized; normalization is an explicit step before
// solving.
inline Instance parse_tsplib(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int dimension = -1;
    bool saw_name = false;
    bool saw_weight_type = false;
    bool in_coords = false;
    std::vector<Point> points;
    std::vector<bool> filled;

    while (std::getline(in, line)) {
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (!in_coords) {
            if (t == "NODE_COORD_SECTION") {
                if (dimension < 0) throw MalformedFile("NODE_COORD_SECTION before DIMENSION");
                points.assign(static_cast<std::size_t>(dimension), {});
                filled.assign(static_cast<std::size_t>(dimension), false);
                in_coords = true;
                continue;
            }
            if (t == "EOF") break;
            std::string key, value;
            if (!detail::split_header(t, key, value)) continue;
            if (key == "NAME") {
                saw_name = true;
            } else if (key == "DIMENSION") {
                try {
                    dimension = std::stoi(value);
                } catch (const std::exception&) {
                    throw MalformedFile("bad DIMENSION value: " + value);
                }
                if (dimension < 3) throw MalformedFile("DIMENSION must be at least 3");
            } else if (key == "EDGE_WEIGHT_TYPE") {
                saw_weight_type = true;
                if (value != "EUC_2D") {
                    throw UnsupportedFormat("unsupported EDGE_WEIGHT_TYPE: " + value);
                }
            }
        } else {
            if (t == "EOF") break;
            std::istringstream row(t);
            long idx;
            double x, y;
            if (!(row >> idx >> x >> y)) throw MalformedFile("bad coordinate line: " + t);
            if (idx < 1 || idx > dimension) {
                throw MalformedFile("coordinate index out of range: " + std::to_string(idx));
            }
            points[static_cast<std::size_t>(idx - 1)] = {x, y};
            filled[static_cast<std::size_t>(idx - 1)] = true;
        }
    }

    if (!saw_name) throw MalformedFile("missing NAME");
    if (!saw_weight_type) throw UnsupportedFormat("missing EDGE_WEIGHT_TYPE");
    if (dimension < 0) throw MalformedFile("missing DIMENSION");
    if (!in_coords) throw MalformedFile("missing NODE_COORD_SECTION");
    for (std::size_t i = 0; i < filled.size(); ++i) {
        if (!filled[i]) {
            throw MalformedFile("coordinate count mismatch: node " + std::to_string(i + 1) +
                                " missing");
        }
    }
    Instance inst{std::move(points)};
    check_instance_size(inst.n());
    return inst;
}

inline std::string write_tsplib(const Instance& inst, const std::string& name) {
    std::ostringstream out;
    out.precision(17);
    out << "NAME : " << name << "\n";
    out << "TYPE : TSP\n";
    out << "DIMENSION : " << inst.n() << "\n";
    out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
    out << "NODE_COORD_SECTION\n";
    for (int i = 0; i < inst.n(); ++i) {
        out << (i + 1) << " " << inst.points[static_cast<std::size_t>(i)].x << " "
            << inst.points[static_cast<std::size_t>(i)].y << "\n";
    }
    out << "EOF\n";
    return out.str();
}

}  // namespace tspsro
