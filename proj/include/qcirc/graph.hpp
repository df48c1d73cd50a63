#pragma once

#include <string>
#include <vector>

#include "qcirc/netlist.hpp"
#include "qcirc/rational.hpp"

namespace qcirc {

/// Directed multigraph of the circuit. Branch order follows netlist order;
/// inductive biases are not branches (they only add node-flux energies).
struct CircuitGraph {
    std::vector<std::string> nodes;  // copied from netlist, ordered
    struct Branch {
        int element;  // index into netlist.elements
        int tail;
        int head;
        ElementKind kind;
        std::string id;
    };
    std::vector<Branch> branches;
    std::vector<int> cap_branches;  // positions into branches (set C)
    std::vector<int> ind_branches;  // positions into branches (set I)
    std::vector<int> bias_elements; // netlist element indices of inductive biases

    int num_nodes() const { return static_cast<int>(nodes.size()); }

    /// Full incidence matrix A (branches x nodes), entries in {-1,0,+1}:
    /// +1 where the branch points toward the node.
    RatMat incidence() const;
    /// Capacitive incidence matrix Omega (|C| x nodes), rows in cap_branches order.
    RatMat cap_incidence() const;
};

/// Loops, islands and the corresponding exact null vectors of Omega.
struct NullStructure {
    struct LoopEdge {
        int cap_pos;  // index into cap_branches
        int sign;     // +1 when traversed tail->head
    };
    struct Loop {
        std::vector<LoopEdge> edges;  // ordered around the cycle, chord first
        int chord;                    // cap_pos of the defining non-tree edge
    };
    std::vector<Loop> cap_loops;                 // Delta_C (fundamental basis)
    std::vector<std::vector<int>> ind_islands;   // Gamma_I: node sets, sorted
    std::vector<std::vector<int>> cap_islands;   // Gamma_C: node sets, sorted
    std::vector<int> tree;                       // spanning forest of C used for the basis

    /// Left null vector of a loop (length |C|, entries -1/0/+1).
    std::vector<Rat> left_null(std::size_t loop) const;
    /// Right null vector of an island (length |V|, entries 0/1).
    std::vector<Rat> right_null(std::size_t island) const;
};

CircuitGraph build_graph(const Netlist& n);

/// Deterministic spanning forest of the capacitive subgraph. Flux batteries
/// are taken first (their branch fluxes are pinned parameters and must not be
/// chord charges), then capacitors/QPS by netlist order, then voltage sources.
std::vector<int> default_cap_forest(const CircuitGraph& g);

/// Null structure relative to a given capacitive spanning forest.
NullStructure null_structure(const CircuitGraph& g, const std::vector<int>& tree);
NullStructure null_structure(const CircuitGraph& g);

/// Genus identity g - 1 = |Delta_C| - |Gamma_I| with g = |C| - |V| + 1,
/// using the fundamental-cycle count for |Delta_C|.
bool genus_check(const CircuitGraph& g, const NullStructure& ns);

/// rank(Omega) == |V| - |Gamma_I| == |C| - |Delta_C| by exact elimination.
bool rank_identity_check(const CircuitGraph& g, const NullStructure& ns);

/// DOT rendering (capacitive edges red, inductive blue, tree edges bold).
std::string to_dot(const CircuitGraph& g, const NullStructure& ns);

}  // namespace qcirc
