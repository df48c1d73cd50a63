#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "qcirc/graph.hpp"
#include "qcirc/netlist.hpp"

namespace qcirc {

namespace {

void add(std::vector<Finding>& out, const std::string& code, const std::string& msg, int line) {
    out.push_back({code, msg, line});
}

}  // namespace

ValidationReport validate(const Netlist& n) {
    ValidationReport rep;

    for (const auto& e : n.elements) {
        if (e.tail == e.head)
            add(rep.errors, "self-loop",
                "element '" + e.id + "' connects node '" + e.tail + "' to itself", e.line);
        if ((e.kind == ElementKind::Capacitor || e.kind == ElementKind::Inductor) &&
            e.param.value <= 0.0)
            add(rep.errors, "nonpositive-value",
                std::string("element '") + e.id + "' has nonpositive " +
                    (e.kind == ElementKind::Capacitor ? "capacitance" : "inductance"),
                e.line);
    }
    if (!rep.errors.empty()) return rep;  // graph checks assume well-formed elements

    CircuitGraph g = build_graph(n);

    // Connectivity over branches (biases are not conductive paths).
    if (!g.branches.empty()) {
        std::vector<std::vector<int>> adj(g.num_nodes());
        for (const auto& b : g.branches) {
            adj[b.tail].push_back(b.head);
            adj[b.head].push_back(b.tail);
        }
        std::vector<bool> seen(g.num_nodes(), false);
        std::vector<int> queue{0};
        seen[0] = true;
        for (std::size_t i = 0; i < queue.size(); ++i)
            for (int w : adj[queue[i]])
                if (!seen[w]) {
                    seen[w] = true;
                    queue.push_back(w);
                }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            add(rep.errors, "disconnected", "circuit graph is disconnected", 0);
    }
    for (int bi : g.bias_elements) {
        const auto& el = n.elements[bi];
        bool tail_used = false, head_used = false;
        for (const auto& b : g.branches) {
            tail_used |= g.nodes[b.tail] == el.tail || g.nodes[b.head] == el.tail;
            head_used |= g.nodes[b.tail] == el.head || g.nodes[b.head] == el.head;
        }
        if (!tail_used || !head_used)
            add(rep.errors, "floating-bias",
                "inductive bias '" + el.id + "' attaches to a node with no branches", el.line);
    }
    if (!rep.errors.empty()) return rep;

    NullStructure ns = null_structure(g);

    // Battery-only cycles cannot be broken by the spanning forest.
    for (const auto& loop : ns.cap_loops) {
        bool all_battery = true;
        for (const auto& le : loop.edges)
            all_battery &= g.branches[g.cap_branches[le.cap_pos]].kind == ElementKind::FluxBattery;
        if (all_battery)
            add(rep.errors, "battery-cycle", "capacitive loop made only of flux batteries", 0);
    }

    // Nonanalytic constraint warnings: a QPS inside a capacitive loop, and the
    // dual case of a JJ whose terminals are not capacitively connected.
    for (const auto& loop : ns.cap_loops) {
        for (const auto& le : loop.edges) {
            const auto& b = g.branches[g.cap_branches[le.cap_pos]];
            if (b.kind == ElementKind::QuantumPhaseSlip) {
                add(rep.warnings, "qps-capacitive-loop",
                    "capacitive loop containing QPS '" + b.id +
                        "': nonanalytic constraint (no series inductance)",
                    n.elements[b.element].line);
            }
        }
    }
    std::vector<int> island_of(g.num_nodes(), -1);
    for (std::size_t i = 0; i < ns.ind_islands.size(); ++i)
        for (int v : ns.ind_islands[i]) island_of[v] = static_cast<int>(i);
    for (int p : g.ind_branches) {
        const auto& b = g.branches[p];
        if (b.kind == ElementKind::JosephsonJunction && island_of[b.tail] != island_of[b.head])
            add(rep.warnings, "jj-no-parallel-cap",
                "JJ '" + b.id + "' without parallel capacitive path: nonanalytic island constraint",
                n.elements[b.element].line);
    }

    // Sources and batteries represent loop quantities; warn when dangling.
    std::vector<bool> on_loop(g.cap_branches.size(), false);
    for (const auto& loop : ns.cap_loops)
        for (const auto& le : loop.edges) on_loop[le.cap_pos] = true;
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        const auto& b = g.branches[g.cap_branches[cp]];
        if (b.kind == ElementKind::VoltageSource && !on_loop[cp])
            add(rep.warnings, "source-not-in-loop",
                "voltage source '" + b.id + "' is not part of any capacitive loop",
                n.elements[b.element].line);
    }

    // Flux batteries written as fractions of a symbol must provide the whole
    // external flux around each loop they sit in: |sum of signed fractions| = 1.
    for (const auto& loop : ns.cap_loops) {
        std::map<std::string, double> frac;
        for (const auto& le : loop.edges) {
            const auto& b = g.branches[g.cap_branches[le.cap_pos]];
            if (b.kind != ElementKind::FluxBattery) continue;
            const auto& el = n.elements[b.element];
            if (!el.param.symbolic) continue;
            frac[el.param.symbol] += le.sign * el.param.factor;
        }
        for (const auto& [sym, f] : frac) {
            if (std::abs(std::abs(f) - 1.0) > 1e-12) {
                std::ostringstream msg;
                msg << "battery fractions of symbol '" << sym << "' sum to " << f
                    << " around a capacitive loop (expected +/-1)";
                add(rep.errors, "battery-fraction-sum", msg.str(), 0);
            }
        }
    }

    return rep;
}

}  // namespace qcirc
