#pragma once

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcirc/graph.hpp"
#include "qcirc/ham.hpp"
#include "qcirc/netlist.hpp"
#include "qcirc/quantize.hpp"
#include "qcirc/rational.hpp"
#include "qcirc/reduce.hpp"

namespace qcirc_test {

using namespace qcirc;

inline std::string circuits_dir() {
    const char* env = std::getenv("QCIRC_CIRCUITS");
    return env ? env : "../../circuits";
}

inline std::string read_circuit(const std::string& name) {
    std::ifstream in(circuits_dir() + "/" + name);
    if (!in) throw std::runtime_error("cannot open circuit file " + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Full pipeline with defaults, for tests.
struct Built {
    Netlist n;
    CircuitGraph g;
    NullStructure ns;
    ReducedSystem rs;
    EnergyExpr h;
};

inline Built build_all(const std::string& text, bool noether = true,
                       const std::vector<std::string>& tree_ids = {},
                       bool allow_multivalued = false,
                       const std::map<std::string, double>& offsets = {}) {
    Built b;
    b.n = parse_netlist(text);
    b.g = build_graph(b.n);
    auto tree = spanning_tree(b.g, tree_ids);
    b.ns = null_structure(b.g, tree);
    b.rs = canonical_coordinates(b.n, b.g, b.ns, tree);
    ConstraintOptions copt;
    copt.allow_multivalued = allow_multivalued;
    solve_loop_constraints(b.rs, b.n, copt);
    if (noether) {
        NoetherOptions nopt;
        nopt.island_offsets = offsets;
        noether_reduce(b.rs, b.n, nopt);
    }
    b.h = build_hamiltonian(b.n, b.rs);
    mark_compact(b.rs, b.h, {});
    return b;
}

// ---------------------------------------------------------------------------
// Independent exact-arithmetic kernel oracle (deliberately not RatMat).

inline std::size_t oracle_rank(std::vector<std::vector<Rat>> rows) {
    if (rows.empty()) return 0;
    std::size_t cols = rows[0].size();
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows.size(); ++c) {
        std::size_t p = rank;
        while (p < rows.size() && rows[p][c] == 0) ++p;
        if (p == rows.size()) continue;
        std::swap(rows[p], rows[rank]);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (r == rank || rows[r][c] == 0) continue;
            Rat f = rows[r][c] / rows[rank][c];
            for (std::size_t j = 0; j < cols; ++j) rows[r][j] -= f * rows[rank][j];
        }
        ++rank;
    }
    return rank;
}

/// Basis of { x : rows . x = 0 }.
inline std::vector<std::vector<Rat>> oracle_kernel(std::vector<std::vector<Rat>> rows,
                                                   std::size_t cols) {
    std::vector<std::size_t> pivot_col;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows.size(); ++c) {
        std::size_t p = rank;
        while (p < rows.size() && rows[p][c] == 0) ++p;
        if (p == rows.size()) continue;
        std::swap(rows[p], rows[rank]);
        Rat inv = Rat(1) / rows[rank][c];
        for (std::size_t j = 0; j < cols; ++j) rows[rank][j] *= inv;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (r == rank || rows[r][c] == 0) continue;
            Rat f = rows[r][c];
            for (std::size_t j = 0; j < cols; ++j) rows[r][j] -= f * rows[rank][j];
        }
        pivot_col.push_back(c);
        ++rank;
    }
    std::vector<bool> is_pivot(cols, false);
    for (auto c : pivot_col) is_pivot[c] = true;
    std::vector<std::vector<Rat>> basis;
    for (std::size_t free = 0; free < cols; ++free) {
        if (is_pivot[free]) continue;
        std::vector<Rat> v(cols);
        v[free] = 1;
        for (std::size_t pi = 0; pi < pivot_col.size(); ++pi) v[pivot_col[pi]] = -rows[pi][free];
        basis.push_back(std::move(v));
    }
    return basis;
}

inline std::vector<std::vector<Rat>> omega_rows(const CircuitGraph& g) {
    std::vector<std::vector<Rat>> rows(g.cap_branches.size(),
                                       std::vector<Rat>(g.num_nodes()));
    for (std::size_t r = 0; r < g.cap_branches.size(); ++r) {
        const auto& b = g.branches[g.cap_branches[r]];
        rows[r][b.head] += 1;
        rows[r][b.tail] -= 1;
    }
    return rows;
}

inline std::vector<std::vector<Rat>> transpose_rows(const std::vector<std::vector<Rat>>& rows,
                                                    std::size_t cols) {
    std::vector<std::vector<Rat>> t(cols, std::vector<Rat>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j][i] = rows[i][j];
    return t;
}

// ---------------------------------------------------------------------------
// Random circuit generator.

struct RandomCircuitOptions {
    int max_nodes = 8;
    int max_edges = 14;
    bool linear_capacitors_only = false;  // no QPS / sources / batteries
    bool linear_only = false;             // additionally no JJ
    bool want_loop = false;               // force at least one capacitive loop
};

inline std::string random_circuit(std::mt19937& rng, const RandomCircuitOptions& opt = {}) {
    std::uniform_int_distribution<int> node_count(2, opt.max_nodes);
    int nv = node_count(rng);
    std::uniform_int_distribution<int> extra_count(0, std::max(0, opt.max_edges - (nv - 1)));
    int extra = extra_count(rng);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    std::ostringstream out;
    int eid = 0;
    auto emit = [&](int a, int b) {
        double r = uni(rng);
        ++eid;
        // Values chosen in lab-plausible decades.
        if (opt.linear_only) {
            if (r < 0.55)
                out << "C e" << eid << " " << a << " " << b << " C=" << 20 + 200 * uni(rng) << "fF\n";
            else
                out << "L e" << eid << " " << a << " " << b << " L=" << 5 + 60 * uni(rng) << "nH\n";
            return;
        }
        if (opt.linear_capacitors_only) {
            if (r < 0.5)
                out << "C e" << eid << " " << a << " " << b << " C=" << 20 + 200 * uni(rng) << "fF\n";
            else if (r < 0.8)
                out << "L e" << eid << " " << a << " " << b << " L=" << 5 + 60 * uni(rng) << "nH\n";
            else
                out << "JJ e" << eid << " " << a << " " << b << " EJ=" << 2 + 10 * uni(rng) << "GHz\n";
            return;
        }
        if (r < 0.40)
            out << "C e" << eid << " " << a << " " << b << " C=" << 20 + 200 * uni(rng) << "fF\n";
        else if (r < 0.75)
            out << "L e" << eid << " " << a << " " << b << " L=" << 5 + 60 * uni(rng) << "nH\n";
        else if (r < 0.9)
            out << "JJ e" << eid << " " << a << " " << b << " EJ=" << 2 + 10 * uni(rng) << "GHz\n";
        else
            out << "QPS e" << eid << " " << a << " " << b << " EQ=" << 1 + 3 * uni(rng) << "GHz\n";
    };

    // Random spanning tree keeps the circuit connected.
    for (int v = 2; v <= nv; ++v) {
        std::uniform_int_distribution<int> prev(1, v - 1);
        emit(prev(rng), v);
    }
    std::uniform_int_distribution<int> any(1, nv);
    for (int i = 0; i < extra; ++i) {
        int a = any(rng), b = any(rng);
        if (a == b) b = (b % nv) + 1;
        if (a == b) continue;
        emit(a, b);
    }
    if (opt.want_loop && nv >= 2) {
        // Two capacitors in parallel always create a capacitive loop.
        out << "C x1 1 2 C=77fF\n";
        out << "C x2 1 2 C=55fF\n";
    }
    return out.str();
}

inline double rel_diff(double a, double b) {
    double s = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / s;
}

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
    return v;
}

}  // namespace qcirc_test
