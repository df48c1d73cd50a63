#include <doctest.h>

#include "helpers.hpp"
#include "qcirc/graph.hpp"

using namespace qcirc;
using namespace qcirc_test;

namespace {

std::vector<std::string> island_ids(const CircuitGraph& g, const std::vector<int>& island) {
    std::vector<std::string> out;
    for (int v : island) out.push_back(g.nodes[v]);
    return out;
}

}  // namespace

TEST_CASE("dualmon capacitive incidence matrix is (-1, 1)") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("dualmon.cq")));
    RatMat omega = g.cap_incidence();
    REQUIRE(omega.rows() == 1);
    REQUIRE(omega.cols() == 2);
    CHECK(omega(0, 0) == -1);
    CHECK(omega(0, 1) == 1);

    NullStructure ns = null_structure(g);
    CHECK(ns.cap_loops.empty());
    REQUIRE(ns.ind_islands.size() == 1);
    CHECK(island_ids(g, ns.ind_islands[0]) == std::vector<std::string>{"1", "2"});
}

TEST_CASE("gate transmon incidence matrix matches the 3-cycle") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("transmon_gate.cq")));
    RatMat omega = g.cap_incidence();
    REQUIRE(omega.rows() == 3);
    REQUIRE(omega.cols() == 3);
    int expect[3][3] = {{-1, 1, 0}, {0, -1, 1}, {1, 0, -1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(omega(i, j) == expect[i][j]);

    NullStructure ns = null_structure(g);
    REQUIRE(ns.ind_islands.size() == 1);
    CHECK(ns.ind_islands[0].size() == 3);
    REQUIRE(ns.cap_loops.size() == 1);
    // One loop over all three edges with all +1 signs (tip-to-tail cycle).
    auto l = ns.left_null(0);
    l.resize(3);
    CHECK(l[0] == 1);
    CHECK(l[1] == 1);
    CHECK(l[2] == 1);
}

TEST_CASE("circuit with no capacitive branches has an empty Omega") {
    CircuitGraph g = build_graph(parse_netlist("L l1 1 2 L=1nH\nL l2 1 2 L=2nH"));
    CHECK(g.cap_incidence().rows() == 0);
    NullStructure ns = null_structure(g);
    CHECK(ns.cap_loops.empty());
    CHECK(ns.ind_islands.size() == 2);  // every node is its own island
}

TEST_CASE("six-node example: islands and the parallel-edge loop") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("fig_tree.cq")));
    NullStructure ns = null_structure(g);

    REQUIRE(ns.ind_islands.size() == 3);
    CHECK(island_ids(g, ns.ind_islands[0]) == std::vector<std::string>{"1", "2", "3"});
    CHECK(island_ids(g, ns.ind_islands[1]) == std::vector<std::string>{"4", "5"});
    CHECK(island_ids(g, ns.ind_islands[2]) == std::vector<std::string>{"6"});

    REQUIRE(ns.cap_loops.size() == 1);
    // The two parallel edges form a two-edge cycle; same orientation means
    // opposite signs in the left null vector (q_c3 - q_c4 direction).
    auto l = ns.left_null(0);
    l.resize(g.cap_branches.size());
    int nonzero = 0;
    for (const auto& v : l) nonzero += v != 0;
    CHECK(nonzero == 2);
    CHECK(l[2] * l[3] == -1);

    CHECK(genus_check(g, ns));
    CHECK(rank_identity_check(g, ns));
}

TEST_CASE("tree-shaped all-capacitive graph: no loops, one island") {
    CircuitGraph g = build_graph(parse_netlist("C c1 1 2 C=1pF\nC c2 2 3 C=1pF\nC c3 2 4 C=1pF"));
    NullStructure ns = null_structure(g);
    CHECK(ns.cap_loops.empty());
    CHECK(ns.ind_islands.size() == 1);
    CHECK(genus_check(g, ns));
}

TEST_CASE("genus identity on the paper's counting examples") {
    {
        CircuitGraph g = build_graph(parse_netlist(read_circuit("transmon_gate.cq")));
        NullStructure ns = null_structure(g);
        // g - 1 = (3 - 3 + 1) - 1 = 0 = 1 - 1.
        CHECK(ns.cap_loops.size() == 1);
        CHECK(ns.ind_islands.size() == 1);
        CHECK(genus_check(g, ns));
    }
    {
        CircuitGraph g = build_graph(parse_netlist(read_circuit("dualmon.cq")));
        NullStructure ns = null_structure(g);
        // (1 - 2 + 1) - 1 = -1 = 0 - 1.
        CHECK(ns.cap_loops.empty());
        CHECK(ns.ind_islands.size() == 1);
        CHECK(genus_check(g, ns));
    }
}

TEST_CASE("random circuits: null structure against the elimination oracle") {
    std::mt19937 rng(20240817);
    for (int trial = 0; trial < 60; ++trial) {
        CAPTURE(trial);
        std::string text = random_circuit(rng);
        Netlist n = parse_netlist(text);
        REQUIRE(validate(n).ok());
        CircuitGraph g = build_graph(n);
        NullStructure ns = null_structure(g);

        auto omega = omega_rows(g);
        std::size_t rank = oracle_rank(omega);
        auto right_kernel = oracle_kernel(omega, g.num_nodes());
        auto left_kernel = oracle_kernel(transpose_rows(omega, g.num_nodes()),
                                         g.cap_branches.size());

        // Counts match the kernel dimensions exactly.
        CHECK(right_kernel.size() == ns.ind_islands.size());
        CHECK(left_kernel.size() == ns.cap_loops.size());
        CHECK(rank == g.num_nodes() - ns.ind_islands.size());
        CHECK(rank == g.cap_branches.size() - ns.cap_loops.size());

        // Our vectors annihilate Omega exactly and are independent, so they
        // span the full kernels.
        CHECK(rank_identity_check(g, ns));
        {
            std::vector<std::vector<Rat>> ours;
            for (std::size_t i = 0; i < ns.cap_loops.size(); ++i) {
                auto v = ns.left_null(i);
                v.resize(g.cap_branches.size());
                for (const auto& c : v) CHECK((c == 0 || c == 1 || c == -1));
                ours.push_back(v);
            }
            CHECK(oracle_rank(ours) == ours.size());
        }
        {
            std::vector<std::vector<Rat>> ours;
            for (std::size_t i = 0; i < ns.ind_islands.size(); ++i) {
                auto v = ns.right_null(i);
                v.resize(g.num_nodes());
                for (const auto& c : v) CHECK((c == 0 || c == 1));
                ours.push_back(v);
            }
            CHECK(oracle_rank(ours) == ours.size());
        }

        CHECK(genus_check(g, ns));
    }
}

TEST_CASE("DOT export mentions every branch") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("fig_tree.cq")));
    std::string dot = to_dot(g, null_structure(g));
    for (const auto& b : g.branches) CHECK(dot.find(b.id) != std::string::npos);
    CHECK(dot.find("red") != std::string::npos);
    CHECK(dot.find("blue") != std::string::npos);
}
