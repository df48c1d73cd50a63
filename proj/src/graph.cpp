#include "qcirc/graph.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qcirc {

RatMat CircuitGraph::incidence() const {
    RatMat a(branches.size(), nodes.size());
    for (std::size_t e = 0; e < branches.size(); ++e) {
        a(e, branches[e].head) += 1;
        a(e, branches[e].tail) -= 1;
    }
    return a;
}

RatMat CircuitGraph::cap_incidence() const {
    RatMat w(cap_branches.size(), nodes.size());
    for (std::size_t r = 0; r < cap_branches.size(); ++r) {
        const auto& b = branches[cap_branches[r]];
        w(r, b.head) += 1;
        w(r, b.tail) -= 1;
    }
    return w;
}

std::vector<Rat> NullStructure::left_null(std::size_t loop) const {
    // Size = number of capacitive branches; cap_pos indexes that set directly.
    int ncap = 0;
    for (const auto& l : cap_loops)
        for (const auto& e : l.edges) ncap = std::max(ncap, e.cap_pos + 1);
    // Callers size against the graph; keep vector long enough for all loops.
    std::vector<Rat> v(static_cast<std::size_t>(ncap));
    for (const auto& e : cap_loops[loop].edges) {
        if (e.cap_pos >= static_cast<int>(v.size())) v.resize(e.cap_pos + 1);
        v[e.cap_pos] = e.sign;
    }
    return v;
}

std::vector<Rat> NullStructure::right_null(std::size_t island) const {
    int nmax = 0;
    for (const auto& isl : ind_islands)
        for (int v : isl) nmax = std::max(nmax, v + 1);
    std::vector<Rat> v(static_cast<std::size_t>(nmax));
    for (int n : ind_islands[island]) v[n] = 1;
    return v;
}

CircuitGraph build_graph(const Netlist& n) {
    CircuitGraph g;
    g.nodes = n.nodes;
    for (std::size_t i = 0; i < n.elements.size(); ++i) {
        const auto& el = n.elements[i];
        if (el.kind == ElementKind::InductiveBias) {
            g.bias_elements.push_back(static_cast<int>(i));
            continue;
        }
        CircuitGraph::Branch b;
        b.element = static_cast<int>(i);
        b.tail = n.node_index(el.tail);
        b.head = n.node_index(el.head);
        b.kind = el.kind;
        b.id = el.id;
        int pos = static_cast<int>(g.branches.size());
        g.branches.push_back(b);
        if (kind_is_capacitive(el.kind))
            g.cap_branches.push_back(pos);
        else
            g.ind_branches.push_back(pos);
    }
    return g;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

std::vector<std::vector<int>> components(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
    UnionFind uf(num_nodes);
    for (auto [a, b] : edges) uf.unite(a, b);
    std::vector<std::vector<int>> comps;
    std::vector<int> root_to_comp(num_nodes, -1);
    for (int v = 0; v < num_nodes; ++v) {
        int r = uf.find(v);
        if (root_to_comp[r] < 0) {
            root_to_comp[r] = static_cast<int>(comps.size());
            comps.emplace_back();
        }
        comps[root_to_comp[r]].push_back(v);
    }
    return comps;  // each sorted ascending, ordered by smallest member
}

int forest_priority(ElementKind k) {
    if (k == ElementKind::FluxBattery) return 0;
    if (k == ElementKind::VoltageSource) return 2;
    return 1;
}

}  // namespace

std::vector<int> default_cap_forest(const CircuitGraph& g) {
    std::vector<int> order(g.cap_branches.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ba = g.branches[g.cap_branches[a]];
        const auto& bb = g.branches[g.cap_branches[b]];
        int pa = forest_priority(ba.kind), pb = forest_priority(bb.kind);
        if (pa != pb) return pa < pb;
        return a < b;  // netlist order within a priority class
    });
    UnionFind uf(g.num_nodes());
    std::vector<int> tree;
    for (int cap_pos : order) {
        const auto& b = g.branches[g.cap_branches[cap_pos]];
        if (uf.unite(b.tail, b.head)) tree.push_back(cap_pos);
    }
    std::sort(tree.begin(), tree.end());
    return tree;
}

NullStructure null_structure(const CircuitGraph& g, const std::vector<int>& tree) {
    NullStructure ns;
    ns.tree = tree;

    // Islands: capacitive connectivity (Gamma_I) and inductive connectivity (Gamma_C).
    std::vector<std::pair<int, int>> cap_edges, ind_edges;
    for (int p : g.cap_branches) cap_edges.push_back({g.branches[p].tail, g.branches[p].head});
    for (int p : g.ind_branches) ind_edges.push_back({g.branches[p].tail, g.branches[p].head});
    ns.ind_islands = components(g.num_nodes(), cap_edges);
    ns.cap_islands = components(g.num_nodes(), ind_edges);

    // Tree adjacency for path finding within the capacitive forest.
    std::vector<std::vector<std::pair<int, int>>> adj(g.num_nodes());  // (neighbor, cap_pos)
    std::vector<bool> in_tree(g.cap_branches.size(), false);
    for (int cap_pos : tree) {
        in_tree[cap_pos] = true;
        const auto& b = g.branches[g.cap_branches[cap_pos]];
        adj[b.tail].push_back({b.head, cap_pos});
        adj[b.head].push_back({b.tail, cap_pos});
    }

    // Fundamental cycle for every chord: chord first, then the tree path from
    // the chord's head back to its tail, each edge signed by traversal sense.
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        if (in_tree[cp]) continue;
        const auto& chord = g.branches[g.cap_branches[cp]];
        // BFS in the tree from chord.head to chord.tail.
        std::vector<int> prev_node(g.num_nodes(), -1), prev_edge(g.num_nodes(), -1);
        std::vector<bool> seen(g.num_nodes(), false);
        std::vector<int> queue{chord.head};
        seen[chord.head] = true;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            int v = queue[qi];
            if (v == chord.tail) break;
            for (auto [w, ep] : adj[v]) {
                if (seen[w]) continue;
                seen[w] = true;
                prev_node[w] = v;
                prev_edge[w] = ep;
                queue.push_back(w);
            }
        }
        if (!seen[chord.tail])
            throw std::logic_error("null_structure: chord endpoints not connected in forest");
        NullStructure::Loop loop;
        loop.chord = static_cast<int>(cp);
        loop.edges.push_back({static_cast<int>(cp), +1});
        // Unwind tail <- ... <- head, then reverse to get head -> tail order.
        std::vector<NullStructure::LoopEdge> path;
        int v = chord.tail;
        while (v != chord.head) {
            int ep = prev_edge[v];
            int u = prev_node[v];
            const auto& b = g.branches[g.cap_branches[ep]];
            // Traversal u -> v: +1 when it matches the branch orientation.
            int sign = (b.tail == u && b.head == v) ? +1 : -1;
            path.push_back({ep, sign});
            v = u;
        }
        std::reverse(path.begin(), path.end());
        for (const auto& e : path) loop.edges.push_back(e);
        ns.cap_loops.push_back(std::move(loop));
    }
    return ns;
}

NullStructure null_structure(const CircuitGraph& g) {
    return null_structure(g, default_cap_forest(g));
}

bool genus_check(const CircuitGraph& g, const NullStructure& ns) {
    long genus = static_cast<long>(g.cap_branches.size()) - g.num_nodes() + 1;
    long lhs = genus - 1;
    long rhs = static_cast<long>(ns.cap_loops.size()) - static_cast<long>(ns.ind_islands.size());
    return lhs == rhs;
}

bool rank_identity_check(const CircuitGraph& g, const NullStructure& ns) {
    std::size_t rank = g.cap_incidence().rank();
    bool row = rank == g.num_nodes() - ns.ind_islands.size();
    bool col = rank == g.cap_branches.size() - ns.cap_loops.size();
    // Null vectors must annihilate Omega exactly.
    RatMat omega = g.cap_incidence();
    for (std::size_t li = 0; li < ns.cap_loops.size(); ++li) {
        auto l = ns.left_null(li);
        l.resize(g.cap_branches.size());
        for (std::size_t v = 0; v < omega.cols(); ++v) {
            Rat s = 0;
            for (std::size_t e = 0; e < omega.rows(); ++e) s += l[e] * omega(e, v);
            if (s != 0) return false;
        }
    }
    for (std::size_t ii = 0; ii < ns.ind_islands.size(); ++ii) {
        auto r = ns.right_null(ii);
        r.resize(g.num_nodes());
        for (std::size_t e = 0; e < omega.rows(); ++e) {
            Rat s = 0;
            for (std::size_t v = 0; v < omega.cols(); ++v) s += omega(e, v) * r[v];
            if (s != 0) return false;
        }
    }
    return row && col;
}

std::string to_dot(const CircuitGraph& g, const NullStructure& ns) {
    std::vector<bool> in_tree(g.cap_branches.size(), false);
    for (int t : ns.tree) in_tree[t] = true;
    std::vector<int> cap_pos_of_branch(g.branches.size(), -1);
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) cap_pos_of_branch[g.cap_branches[cp]] = static_cast<int>(cp);

    std::ostringstream out;
    out << "digraph circuit {\n";
    for (int v = 0; v < g.num_nodes(); ++v)
        out << "  n" << v << " [label=\"" << g.nodes[v] << "\"];\n";
    for (const auto& b : g.branches) {
        bool cap = kind_is_capacitive(b.kind);
        int cp = cap_pos_of_branch[&b - g.branches.data()];
        bool tree_edge = cap && cp >= 0 && in_tree[cp];
        out << "  n" << b.tail << " -> n" << b.head << " [label=\"" << b.id << "\" color="
            << (cap ? "red" : "blue") << (tree_edge ? " penwidth=2.5" : "") << "];\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace qcirc
