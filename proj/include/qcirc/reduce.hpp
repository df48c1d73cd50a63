#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qcirc/graph.hpp"
#include "qcirc/linexpr.hpp"
#include "qcirc/netlist.hpp"

namespace qcirc {

struct SymbolTable {
    std::vector<std::string> names;
    std::vector<std::optional<double>> defaults;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }
    int intern(const std::string& name, std::optional<double> def = std::nullopt) {
        int i = index_of(name);
        if (i >= 0) return i;
        names.push_back(name);
        defaults.push_back(def);
        return static_cast<int>(names.size()) - 1;
    }
};

/// One canonical conjugate pair (Phi_f, Q_f) attached to a tree slot.
struct PairInfo {
    std::string label;     // element id of the defining tree edge
    LinExpr charge_def;    // Q over BranchCharge vars (descriptive)
    LinExpr flux_def;      // Phi over NodeFlux vars (descriptive)
    bool compact = false;
};

/// Tree slots removed from the dynamical set.
struct EliminatedPair {
    enum class Why { BatteryPinned, Noether };
    Why why;
    std::string label;
    LinExpr pinned_flux;          // phi0 units, over symbols (battery case)
    double noether_constant = 0;  // units of 2e (Noether case)
    int cap_island = -1;          // Gamma_C island index (Noether case)
};

struct Constraint {
    enum class Kind { CapacitiveLoop, InductiveIsland };
    enum class Class { Linear, Nonanalytic };
    Kind kind;
    Class cls = Class::Linear;
    std::string description;
    int chord = -1;   // cap position of the defining chord (loop constraints)
    int island = -1;  // Gamma_I island index (island constraints)
};

struct NoetherCharge {
    enum class Status { Applied, SkippedBattery, SkippedBias };
    int cap_island;                // Gamma_C index
    LinExpr charge_in_pairs;       // over PairCharge slots (coefficients at build time)
    LinExpr charge_def;            // over BranchCharge vars (descriptive)
    double constant = 0;           // units of 2e
    Status status = Status::Applied;
    int eliminated_slot = -1;
};

/// Stationary-point elimination of non-dynamical coordinates whose defining
/// equations are nonanalytic (QPS in a capacitive loop, JJ across islands).
/// Unknowns t minimize/extremize the cluster energy; the defining equations
/// are grad_t E = 0. Values and gradients are computed at the solved point.
class StationaryCluster {
public:
    struct Elem {
        // E(u) with u = base + d . t:
        //   quad_coeff/2 * u^2  +  lin_coeff(symbols) * u  -  cos_amp * cos(2*pi*u)
        double quad_coeff = 0;
        LinExpr lin_coeff;  // joules, over Symbol vars
        double cos_amp = 0;
        LinExpr base;             // over external vars (PairCharge or PairFlux, Symbol)
        std::vector<double> d;    // per unknown
        std::string label;        // element id (diagnostics)
    };

    std::vector<Elem> elems;
    int num_unknowns = 0;
    bool allow_multivalued = false;

    /// External variables the cluster reads, in a fixed order.
    std::vector<Var> external_vars() const;

    /// Sufficient single-valuedness condition: the linear stiffness dominates
    /// the worst-case curvature of all cosine members.
    bool provably_single_valued() const;

    /// Solve grad_t E = 0 for the supplied external assignment.
    std::vector<double> solve(const std::function<double(Var)>& value) const;

    /// Cluster energy at the stationary point (joules).
    double energy(const std::function<double(Var)>& value) const;

    /// dE/d(var) at the stationary point (envelope theorem: explicit partials).
    double denergy(Var v, const std::function<double(Var)>& value) const;

    /// Apply a variable substitution to all base expressions (Noether merges).
    void substitute(const std::function<const LinExpr*(Var)>& lookup);

private:
    mutable std::mutex memo_mutex_;
    mutable std::map<std::vector<double>, std::vector<double>> memo_;

    std::vector<double> solve_uncached(const std::vector<double>& ext) const;

public:
    StationaryCluster() = default;
    StationaryCluster(const StationaryCluster& o)
        : elems(o.elems), num_unknowns(o.num_unknowns), allow_multivalued(o.allow_multivalued) {}
    StationaryCluster& operator=(const StationaryCluster& o) {
        elems = o.elems;
        num_unknowns = o.num_unknowns;
        allow_multivalued = o.allow_multivalued;
        std::lock_guard<std::mutex> lk(memo_mutex_);
        memo_.clear();
        return *this;
    }
};

/// Canonical coordinates, substitution data and constraint state for a circuit.
struct ReducedSystem {
    CircuitGraph graph;
    NullStructure nulls;
    SymbolTable symbols;

    std::vector<int> tree;    // cap positions, ascending (the slots)
    std::vector<int> chords;  // cap positions not in tree, ascending
    RatMat K;                 // chords x tree: phi_chord = K . Phi_tree
    RatMat M;                 // |C| x |T| with Q = M^T q

    /// Slot state. Variables PairCharge/PairFlux are indexed by slot.
    std::vector<PairInfo> slot_info;              // per slot
    std::vector<bool> slot_active;                // dynamical?
    std::vector<bool> slot_battery;               // pinned battery edge?
    std::vector<EliminatedPair> eliminated;

    /// Exact expressions (units: charges 2e, fluxes phi0).
    std::vector<LinExpr> cap_charge;   // per cap position: over PairCharge, LoopCharge, Symbol
    std::vector<LinExpr> ind_flux;     // per inductive branch (ind order): over PairFlux, IslandFlux, Symbol
    std::vector<LinExpr> bias_flux;    // per bias element: same space

    std::vector<Constraint> constraints;
    std::vector<std::optional<LinExpr>> loop_solution;    // per chord order
    std::vector<std::optional<LinExpr>> island_solution;  // per Gamma_I island index
    std::shared_ptr<StationaryCluster> implicit_charge;   // set when loops are nonanalytic
    std::shared_ptr<StationaryCluster> implicit_flux;     // set when islands are nonanalytic
    /// Chord indices / island indices handled by the implicit clusters.
    std::vector<int> implicit_chords;
    std::vector<int> implicit_islands;

    std::vector<NoetherCharge> noether;

    bool constraints_solved = false;
    bool noether_done = false;

    int num_slots() const { return static_cast<int>(tree.size()); }
    std::vector<int> active_slots() const {
        std::vector<int> out;
        for (int s = 0; s < num_slots(); ++s)
            if (slot_active[s]) out.push_back(s);
        return out;
    }
    int pair_count() const { return static_cast<int>(active_slots().size()); }
};

/// Deterministic spanning forest; `forced_ids` (element ids) overrides it and
/// must form a complete spanning forest of the capacitive subgraph.
std::vector<int> spanning_tree(const CircuitGraph& g, const std::vector<std::string>& forced_ids = {});

/// Build pairs, K, M, charge/flux expressions and record the constraints.
/// Verifies Omega = M . B exactly (the symplectic identity of the tree
/// construction) and pins battery tree fluxes to their symbolic values.
ReducedSystem canonical_coordinates(const Netlist& n, const CircuitGraph& g, const NullStructure& ns,
                                    const std::vector<int>& tree);

struct ConstraintOptions {
    bool allow_multivalued = false;
};

/// Solve the capacitive-loop (left null) and inductive-island (right null)
/// constraints: closed-form elimination where linear, registered stationary
/// clusters where nonanalytic.
void solve_loop_constraints(ReducedSystem& rs, const Netlist& n, const ConstraintOptions& opt = {});

struct NoetherOptions {
    /// Per-node offsets in units of 2e; the island containing the node gets
    /// the value as its conserved-charge constant.
    std::map<std::string, double> island_offsets;
};

/// Eliminate one pair per capacitively shunted island beyond the first,
/// setting each conserved charge to its constant (default 0).
void noether_reduce(ReducedSystem& rs, const Netlist& n, const NoetherOptions& opt = {});

struct TreeTransform {
    /// Old tree fluxes over new: Phi_old = sigma . Phi_new; charges map
    /// contragradiently, Q_new = sigma^T Q_old. Unimodular by construction.
    RatMat sigma;
};

/// Canonical transformation between two spanning trees of the same graph,
/// built as a product of single-edge swap factors.
TreeTransform tree_transform(const ReducedSystem& a, const ReducedSystem& b);

enum class CompactPolicy { Auto, ManualCompact, ManualNonCompact };

class EnergyExpr;  // ham module

/// Flag pairs whose flux is phi0-periodic in the built Hamiltonian.
/// `manual` entries (pair label -> policy) override the automatic rule.
void mark_compact(ReducedSystem& rs, const EnergyExpr& h,
                  const std::map<std::string, CompactPolicy>& manual = {});

}  // namespace qcirc
