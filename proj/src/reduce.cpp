#include "qcirc/reduce.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qcirc/constants.hpp"
#include "qcirc/ham.hpp"

namespace qcirc {

namespace {

std::string join_ids(const CircuitGraph& g, const std::vector<int>& nodes) {
    std::string s = "{";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) s += ",";
        s += g.nodes[nodes[i]];
    }
    return s + "}";
}

}  // namespace

// ---------------------------------------------------------------------------
// StationaryCluster

std::vector<Var> StationaryCluster::external_vars() const {
    std::set<Var> vars;
    for (const auto& e : elems) {
        for (const auto& [v, c] : e.base.coeffs()) vars.insert(v);
        for (const auto& [v, c] : e.lin_coeff.coeffs()) vars.insert(v);
    }
    return {vars.begin(), vars.end()};
}

bool StationaryCluster::provably_single_valued() const {
    if (num_unknowns == 0) return true;
    Eigen::MatrixXd jlin = Eigen::MatrixXd::Zero(num_unknowns, num_unknowns);
    double cos_bound = 0.0;
    for (const auto& e : elems) {
        Eigen::VectorXd d(num_unknowns);
        for (int i = 0; i < num_unknowns; ++i) d[i] = e.d[i];
        if (e.quad_coeff != 0.0) jlin += e.quad_coeff * d * d.transpose();
        if (e.cos_amp != 0.0) cos_bound += kTwoPi * kTwoPi * std::abs(e.cos_amp) * d.squaredNorm();
    }
    if (cos_bound == 0.0) return true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jlin, Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues().minCoeff();
    return lmin > cos_bound * (1.0 + 1e-12);
}

std::vector<double> StationaryCluster::solve(const std::function<double(Var)>& value) const {
    auto ext_vars = external_vars();
    std::vector<double> key(ext_vars.size());
    for (std::size_t i = 0; i < ext_vars.size(); ++i) key[i] = value(ext_vars[i]);
    {
        std::lock_guard<std::mutex> lk(memo_mutex_);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
    }
    auto t = solve_uncached(key);
    std::lock_guard<std::mutex> lk(memo_mutex_);
    memo_.emplace(std::move(key), t);
    return t;
}

std::vector<double> StationaryCluster::solve_uncached(const std::vector<double>& ext) const {
    auto ext_vars = external_vars();
    auto lookup = [&](Var v) -> double {
        for (std::size_t i = 0; i < ext_vars.size(); ++i)
            if (ext_vars[i] == v) return ext[i];
        throw std::logic_error("StationaryCluster: unknown external variable");
    };

    const int n = num_unknowns;
    struct Ev {
        double base, lin;
    };
    std::vector<Ev> ev(elems.size());
    for (std::size_t e = 0; e < elems.size(); ++e) {
        ev[e].base = elems[e].base.eval(lookup);
        ev[e].lin = elems[e].lin_coeff.eval(lookup);
    }

    auto grad = [&](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
        g.setZero(n);
        for (std::size_t e = 0; e < elems.size(); ++e) {
            double u = ev[e].base;
            for (int i = 0; i < n; ++i) u += elems[e].d[i] * t[i];
            double ep = elems[e].quad_coeff * u + ev[e].lin +
                        kTwoPi * elems[e].cos_amp * std::sin(kTwoPi * u);
            for (int i = 0; i < n; ++i) g[i] += ep * elems[e].d[i];
        }
    };
    auto hess = [&](const Eigen::VectorXd& t, Eigen::MatrixXd& h) {
        h.setZero(n, n);
        for (std::size_t e = 0; e < elems.size(); ++e) {
            double u = ev[e].base;
            for (int i = 0; i < n; ++i) u += elems[e].d[i] * t[i];
            double epp = elems[e].quad_coeff +
                         kTwoPi * kTwoPi * elems[e].cos_amp * std::cos(kTwoPi * u);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) h(i, j) += epp * elems[e].d[i] * elems[e].d[j];
        }
    };
    auto scale_of = [&](const Eigen::VectorXd& t) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        for (std::size_t e = 0; e < elems.size(); ++e) {
            double u = ev[e].base;
            for (int i = 0; i < n; ++i) u += elems[e].d[i] * t[i];
            double mag = std::abs(elems[e].quad_coeff * u) + std::abs(ev[e].lin) +
                         kTwoPi * std::abs(elems[e].cos_amp);
            for (int i = 0; i < n; ++i) s[i] += std::abs(elems[e].d[i]) * mag;
        }
        return s;
    };

    // Linearized start: solve J_lin t = -grad_lin(0).
    Eigen::MatrixXd jlin = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (std::size_t e = 0; e < elems.size(); ++e) {
        for (int i = 0; i < n; ++i) {
            c[i] += (elems[e].quad_coeff * ev[e].base + ev[e].lin) * elems[e].d[i];
            for (int j = 0; j < n; ++j)
                jlin(i, j) += elems[e].quad_coeff * elems[e].d[i] * elems[e].d[j];
        }
    }
    double reg = 1e-12 * (jlin.diagonal().cwiseAbs().maxCoeff() + 1.0);
    Eigen::VectorXd t =
        (jlin + reg * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(-c);

    Eigen::VectorXd g(n);
    grad(t, g);

    if (n == 1) {
        // Bracket + bisection, then Newton polish.
        auto g1 = [&](double x) {
            Eigen::VectorXd tv(1), gv(1);
            tv[0] = x;
            grad(tv, gv);
            return gv[0];
        };
        double t0 = t[0];
        double lo = t0, hi = t0, glo = g1(lo), ghi = glo;
        double span = 0.5 + std::abs(t0);
        bool bracketed = false;
        for (int k = 0; k < 60 && !bracketed; ++k) {
            lo = t0 - span;
            hi = t0 + span;
            glo = g1(lo);
            ghi = g1(hi);
            if ((glo <= 0 && ghi >= 0) || (glo >= 0 && ghi <= 0)) bracketed = true;
            span *= 1.6;
        }
        if (bracketed) {
            for (int k = 0; k < 200; ++k) {
                double mid = 0.5 * (lo + hi);
                double gm = g1(mid);
                if ((gm <= 0) == (glo <= 0)) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                    ghi = gm;
                }
            }
            t[0] = 0.5 * (lo + hi);
        }
        grad(t, g);
    }

    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd scale = scale_of(t);
    for (int iter = 0; iter < 200; ++iter) {
        bool done = true;
        for (int i = 0; i < n; ++i)
            if (std::abs(g[i]) > 1e-12 * std::max(scale[i], 1e-300)) done = false;
        if (done) break;
        hess(t, h);
        double hreg = 1e-14 * (h.diagonal().cwiseAbs().maxCoeff() + 1.0);
        Eigen::VectorXd step = (h + hreg * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(-g);
        double alpha = 1.0;
        double gn0 = g.norm();
        Eigen::VectorXd tn(n), gn(n);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            tn = t + alpha * step;
            grad(tn, gn);
            if (gn.norm() < gn0 * (1.0 - 1e-4 * alpha) || gn.norm() < 1e-300) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw std::runtime_error("implicit constraint root-finding did not converge");
        t = tn;
        g = gn;
        scale = scale_of(t);
        if (iter == 199)
            throw std::runtime_error("implicit constraint root-finding did not converge");
    }
    return {t.data(), t.data() + n};
}

double StationaryCluster::energy(const std::function<double(Var)>& value) const {
    auto t = solve(value);
    double total = 0.0;
    for (const auto& e : elems) {
        double u = e.base.eval(value);
        for (int i = 0; i < num_unknowns; ++i) u += e.d[i] * t[i];
        total += 0.5 * e.quad_coeff * u * u + e.lin_coeff.eval(value) * u -
                 e.cos_amp * std::cos(kTwoPi * u);
    }
    return total;
}

double StationaryCluster::denergy(Var v, const std::function<double(Var)>& value) const {
    auto t = solve(value);
    double total = 0.0;
    for (const auto& e : elems) {
        double u = e.base.eval(value);
        for (int i = 0; i < num_unknowns; ++i) u += e.d[i] * t[i];
        double ep = e.quad_coeff * u + e.lin_coeff.eval(value) +
                    kTwoPi * e.cos_amp * std::sin(kTwoPi * u);
        total += ep * rat_to_double(e.base.coeff(v));
        total += rat_to_double(e.lin_coeff.coeff(v)) * u;  // symbolic linear coefficient
    }
    return total;
}

void StationaryCluster::substitute(const std::function<const LinExpr*(Var)>& lookup) {
    for (auto& e : elems) e.base = e.base.substituted(lookup);
    std::lock_guard<std::mutex> lk(memo_mutex_);
    memo_.clear();
}

// ---------------------------------------------------------------------------
// Spanning tree

std::vector<int> spanning_tree(const CircuitGraph& g, const std::vector<std::string>& forced_ids) {
    if (forced_ids.empty()) return default_cap_forest(g);

    std::vector<int> forced;  // cap positions
    for (const auto& id : forced_ids) {
        int found = -1;
        for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp)
            if (g.branches[g.cap_branches[cp]].id == id) found = static_cast<int>(cp);
        if (found < 0)
            throw std::invalid_argument("forced tree edge '" + id + "' is not a capacitive branch");
        forced.push_back(found);
    }
    std::sort(forced.begin(), forced.end());
    forced.erase(std::unique(forced.begin(), forced.end()), forced.end());

    // Acyclicity.
    std::vector<int> parent(g.num_nodes());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int cp : forced) {
        const auto& b = g.branches[g.cap_branches[cp]];
        int ra = find(b.tail), rb = find(b.head);
        if (ra == rb)
            throw std::invalid_argument("forced tree contains a cycle (at edge '" + b.id + "')");
        parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    // Spanning: every capacitively connected node pair must stay connected.
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        const auto& b = g.branches[g.cap_branches[cp]];
        if (find(b.tail) != find(b.head))
            throw std::invalid_argument("forced tree misses capacitively-reachable node '" +
                                        g.nodes[b.head] + "' (edge '" + b.id + "' left unspanned)");
    }
    return forced;
}

// ---------------------------------------------------------------------------
// Canonical coordinates

namespace {

/// Signed tree path: returns per-slot coefficients so that
/// phi(to) - phi(from) = sum_f coeff_f * Phi_f. Empty optional when the two
/// nodes are not connected in the forest.
std::optional<std::vector<Rat>> tree_path(const CircuitGraph& g, const std::vector<int>& tree,
                                          int from, int to) {
    std::vector<std::vector<std::pair<int, int>>> adj(g.num_nodes());  // (neighbor, slot)
    for (std::size_t s = 0; s < tree.size(); ++s) {
        const auto& b = g.branches[g.cap_branches[tree[s]]];
        adj[b.tail].push_back({b.head, static_cast<int>(s)});
        adj[b.head].push_back({b.tail, static_cast<int>(s)});
    }
    std::vector<int> prev_node(g.num_nodes(), -1), prev_slot(g.num_nodes(), -1);
    std::vector<bool> seen(g.num_nodes(), false);
    std::vector<int> queue{from};
    seen[from] = true;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        int v = queue[qi];
        for (auto [w, s] : adj[v]) {
            if (seen[w]) continue;
            seen[w] = true;
            prev_node[w] = v;
            prev_slot[w] = s;
            queue.push_back(w);
        }
    }
    if (!seen[to]) return std::nullopt;
    std::vector<Rat> coeff(tree.size());
    int v = to;
    while (v != from) {
        int s = prev_slot[v];
        int u = prev_node[v];
        const auto& b = g.branches[g.cap_branches[tree[s]]];
        // Traversal u -> v adds +Phi when it matches the branch orientation.
        coeff[s] += (b.tail == u && b.head == v) ? Rat(1) : Rat(-1);
        v = u;
    }
    return coeff;
}

LinExpr battery_pinned_flux(const Element& el, SymbolTable& symbols) {
    // Battery branch flux in units of phi0.
    if (el.param.symbolic) {
        int si = symbols.index_of(el.param.symbol);
        if (si < 0) throw std::logic_error("battery symbol not interned");
        return LinExpr::variable(symbol_var(si), rat_from_double(el.param.factor) / rat_flux_quantum());
    }
    return LinExpr(rat_from_double(el.param.value) / rat_flux_quantum());
}

}  // namespace

ReducedSystem canonical_coordinates(const Netlist& n, const CircuitGraph& g, const NullStructure& ns,
                                    const std::vector<int>& tree_in) {
    ReducedSystem rs;
    rs.graph = g;
    std::vector<int> tree = tree_in;
    std::sort(tree.begin(), tree.end());
    rs.nulls = (ns.tree == tree) ? ns : null_structure(g, tree);
    rs.tree = tree;
    for (const auto& p : n.params) rs.symbols.intern(p.name, p.default_value);

    std::vector<int> slot_of_cap(g.cap_branches.size(), -1);
    for (std::size_t s = 0; s < tree.size(); ++s) slot_of_cap[tree[s]] = static_cast<int>(s);
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp)
        if (slot_of_cap[cp] < 0) {
            if (g.branches[g.cap_branches[cp]].kind == ElementKind::FluxBattery)
                throw std::domain_error("flux battery '" + g.branches[g.cap_branches[cp]].id +
                                        "' must be a spanning-tree edge (adjust --tree)");
            rs.chords.push_back(static_cast<int>(cp));
        }

    // K: chord fluxes over tree fluxes.
    rs.K = RatMat(rs.chords.size(), tree.size());
    for (std::size_t a = 0; a < rs.chords.size(); ++a) {
        const auto& b = g.branches[g.cap_branches[rs.chords[a]]];
        auto path = tree_path(g, tree, b.tail, b.head);
        if (!path) throw std::logic_error("canonical_coordinates: chord not spanned by forest");
        for (std::size_t s = 0; s < tree.size(); ++s) rs.K(a, s) = (*path)[s];
    }
    // M = (I | K)^T arranged by capacitive branch order.
    rs.M = RatMat(g.cap_branches.size(), tree.size());
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        if (slot_of_cap[cp] >= 0) {
            rs.M(cp, slot_of_cap[cp]) = 1;
        } else {
            std::size_t a = std::find(rs.chords.begin(), rs.chords.end(), static_cast<int>(cp)) -
                            rs.chords.begin();
            for (std::size_t s = 0; s < tree.size(); ++s) rs.M(cp, s) = rs.K(a, s);
        }
    }

    // Exact symplectic identity of the construction: Omega = M . B.
    {
        RatMat b(tree.size(), g.num_nodes());
        for (std::size_t s = 0; s < tree.size(); ++s) {
            const auto& br = g.branches[g.cap_branches[tree[s]]];
            b(s, br.head) += 1;
            b(s, br.tail) -= 1;
        }
        if (!(rs.M * b == g.cap_incidence()))
            throw std::logic_error("canonical_coordinates: symplectic identity Omega = M.B failed");
    }

    // Slots.
    rs.slot_info.resize(tree.size());
    rs.slot_active.assign(tree.size(), true);
    rs.slot_battery.assign(tree.size(), false);
    for (std::size_t s = 0; s < tree.size(); ++s) {
        const auto& b = g.branches[g.cap_branches[tree[s]]];
        const auto& el = n.elements[b.element];
        auto& info = rs.slot_info[s];
        info.label = b.id;
        for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp)
            info.charge_def.add(branch_charge(static_cast<int>(cp)), rs.M(cp, s));
        info.flux_def.add(node_flux(b.head), 1);
        info.flux_def.add(node_flux(b.tail), -1);
        if (el.kind == ElementKind::FluxBattery) {
            rs.slot_battery[s] = true;
            rs.slot_active[s] = false;
            EliminatedPair ep;
            ep.why = EliminatedPair::Why::BatteryPinned;
            ep.label = b.id;
            ep.pinned_flux = battery_pinned_flux(el, rs.symbols);
            rs.eliminated.push_back(std::move(ep));
        }
    }

    // Branch charges over pair charges and chord (loop) charges, units of 2e.
    rs.cap_charge.resize(g.cap_branches.size());
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        if (slot_of_cap[cp] >= 0) {
            int s = slot_of_cap[cp];
            LinExpr q = LinExpr::variable(pair_charge(s));
            for (std::size_t a = 0; a < rs.chords.size(); ++a)
                if (rs.K(a, s) != 0) q.add(loop_charge(static_cast<int>(a)), -rs.K(a, s));
            rs.cap_charge[cp] = std::move(q);
        } else {
            std::size_t a = std::find(rs.chords.begin(), rs.chords.end(), static_cast<int>(cp)) -
                            rs.chords.begin();
            rs.cap_charge[cp] = LinExpr::variable(loop_charge(static_cast<int>(a)));
        }
    }

    // Node potentials per inductively shunted island: island mean + tree path.
    std::vector<int> island_of(g.num_nodes(), -1);
    for (std::size_t i = 0; i < rs.nulls.ind_islands.size(); ++i)
        for (int v : rs.nulls.ind_islands[i]) island_of[v] = static_cast<int>(i);
    std::vector<LinExpr> potential(g.num_nodes());
    for (std::size_t i = 0; i < rs.nulls.ind_islands.size(); ++i) {
        int root = rs.nulls.ind_islands[i][0];
        LinExpr base;
        if (i > 0) base = LinExpr::variable(island_flux(static_cast<int>(i)));
        for (int v : rs.nulls.ind_islands[i]) {
            auto path = tree_path(g, tree, root, v);
            if (!path) throw std::logic_error("canonical_coordinates: island not spanned by forest");
            LinExpr p = base;
            for (std::size_t s = 0; s < tree.size(); ++s) {
                if ((*path)[s] == 0) continue;
                if (rs.slot_battery[s]) {
                    const auto& bel = n.elements[g.branches[g.cap_branches[tree[s]]].element];
                    LinExpr pinned = battery_pinned_flux(bel, rs.symbols);
                    pinned *= (*path)[s];
                    p += pinned;
                } else {
                    p.add(pair_flux(static_cast<int>(s)), (*path)[s]);
                }
            }
            potential[v] = std::move(p);
        }
    }
    rs.ind_flux.resize(g.ind_branches.size());
    for (std::size_t ip = 0; ip < g.ind_branches.size(); ++ip) {
        const auto& b = g.branches[g.ind_branches[ip]];
        rs.ind_flux[ip] = potential[b.head] - potential[b.tail];
    }
    rs.bias_flux.resize(g.bias_elements.size());
    for (std::size_t bi = 0; bi < g.bias_elements.size(); ++bi) {
        const auto& el = n.elements[g.bias_elements[bi]];
        rs.bias_flux[bi] = potential[n.node_index(el.head)] - potential[n.node_index(el.tail)];
    }

    // Record constraints (solved later).
    for (std::size_t a = 0; a < rs.chords.size(); ++a) {
        Constraint c;
        c.kind = Constraint::Kind::CapacitiveLoop;
        c.chord = rs.chords[a];
        bool nonanalytic = false;
        std::ostringstream desc;
        desc << "sum of voltages around loop of '"
             << g.branches[g.cap_branches[rs.chords[a]]].id << "': ";
        bool first = true;
        for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
            bool on_loop = cp == static_cast<std::size_t>(rs.chords[a]);
            if (!on_loop && slot_of_cap[cp] >= 0 && rs.K(a, slot_of_cap[cp]) != 0) on_loop = true;
            if (!on_loop) continue;
            const auto& b = g.branches[g.cap_branches[cp]];
            if (b.kind == ElementKind::QuantumPhaseSlip) nonanalytic = true;
            if (!first) desc << " + ";
            desc << "V(" << b.id << ")";
            first = false;
        }
        desc << " = 0";
        c.cls = nonanalytic ? Constraint::Class::Nonanalytic : Constraint::Class::Linear;
        c.description = desc.str();
        rs.constraints.push_back(std::move(c));
    }
    std::vector<bool> island_nonanalytic(rs.nulls.ind_islands.size(), false);
    for (std::size_t ip = 0; ip < g.ind_branches.size(); ++ip) {
        const auto& b = g.branches[g.ind_branches[ip]];
        if (b.kind == ElementKind::JosephsonJunction && island_of[b.tail] != island_of[b.head]) {
            island_nonanalytic[island_of[b.tail]] = true;
            island_nonanalytic[island_of[b.head]] = true;
        }
    }
    for (std::size_t i = 1; i < rs.nulls.ind_islands.size(); ++i) {
        Constraint c;
        c.kind = Constraint::Kind::InductiveIsland;
        c.island = static_cast<int>(i);
        c.cls = island_nonanalytic[i] ? Constraint::Class::Nonanalytic : Constraint::Class::Linear;
        c.description =
            "current conservation into island " + join_ids(g, rs.nulls.ind_islands[i]) + " = 0";
        rs.constraints.push_back(std::move(c));
    }

    rs.loop_solution.resize(rs.chords.size());
    rs.island_solution.resize(rs.nulls.ind_islands.size());
    return rs;
}

// ---------------------------------------------------------------------------
// Constraint solving

namespace {

/// dE/du for a capacitive element, as (quadratic coefficient on its own charge
/// expression, additive LinExpr over symbols). Units: joules per (2e charge).
struct CapDeriv {
    Rat quad;        // multiplies the branch-charge expression
    LinExpr affine;  // symbol part
    bool is_qps = false;
    double qps_energy = 0;
};

CapDeriv cap_derivative(const Element& el, SymbolTable& symbols) {
    CapDeriv d;
    switch (el.kind) {
        case ElementKind::Capacitor:
            d.quad = rat_cooper_pair() * rat_cooper_pair() / rat_from_double(el.param.value);
            break;
        case ElementKind::VoltageSource:
            if (el.param.symbolic) {
                int si = symbols.index_of(el.param.symbol);
                d.affine.add(symbol_var(si), rat_cooper_pair() * rat_from_double(el.param.factor));
            } else {
                d.affine.constant() = rat_cooper_pair() * rat_from_double(el.param.value);
            }
            break;
        case ElementKind::FluxBattery:
            break;  // static voltage is zero; drive handled symbolically
        case ElementKind::QuantumPhaseSlip:
            d.is_qps = true;
            d.qps_energy = el.param.value;
            break;
        default:
            throw std::logic_error("cap_derivative: not a capacitive element");
    }
    return d;
}

struct IndDeriv {
    Rat quad;        // multiplies the branch-flux expression
    LinExpr affine;  // symbol part (biases)
    bool is_jj = false;
    double jj_energy = 0;
};

IndDeriv ind_derivative(const Element& el, SymbolTable& symbols) {
    IndDeriv d;
    switch (el.kind) {
        case ElementKind::Inductor:
            d.quad = rat_flux_quantum() * rat_flux_quantum() / rat_from_double(el.param.value);
            break;
        case ElementKind::JosephsonJunction:
            d.is_jj = true;
            d.jj_energy = el.param.value;
            break;
        case ElementKind::InductiveBias:
            if (el.param.symbolic) {
                int si = symbols.index_of(el.param.symbol);
                d.affine.add(symbol_var(si), rat_flux_quantum() * rat_from_double(el.param.factor));
            } else {
                d.affine.constant() = rat_flux_quantum() * rat_from_double(el.param.value);
            }
            break;
        default:
            throw std::logic_error("ind_derivative: not an inductive element");
    }
    return d;
}

}  // namespace

void solve_loop_constraints(ReducedSystem& rs, const Netlist& n, const ConstraintOptions& opt) {
    const CircuitGraph& g = rs.graph;

    // ---- Capacitive loops (left null vectors) ----
    const int nchords = static_cast<int>(rs.chords.size());
    if (nchords > 0) {
        // Components of chords linked by shared elements.
        std::vector<int> comp(nchords);
        std::iota(comp.begin(), comp.end(), 0);
        std::function<int(int)> find = [&](int x) {
            while (comp[x] != x) x = comp[x] = comp[comp[x]];
            return x;
        };
        for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
            int first = -1;
            for (int a = 0; a < nchords; ++a) {
                if (rs.cap_charge[cp].coeff(loop_charge(a)) == 0) continue;
                if (first < 0)
                    first = a;
                else
                    comp[std::max(find(first), find(a))] = std::min(find(first), find(a));
            }
        }
        std::map<int, std::vector<int>> groups;
        for (int a = 0; a < nchords; ++a) groups[find(a)].push_back(a);

        std::vector<int> nonanalytic_chords;
        for (auto& [root, chords_in] : groups) {
            bool nonanalytic = false;
            std::vector<int> members;  // cap positions touched by this component
            for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
                bool touched = false;
                for (int a : chords_in)
                    if (rs.cap_charge[cp].coeff(loop_charge(a)) != 0) touched = true;
                if (!touched) continue;
                members.push_back(static_cast<int>(cp));
                if (g.branches[g.cap_branches[cp]].kind == ElementKind::QuantumPhaseSlip)
                    nonanalytic = true;
            }
            if (nonanalytic) {
                for (int a : chords_in) nonanalytic_chords.push_back(a);
                continue;
            }
            // Exact linear solve: rows = d/d t_a of sum_e E_e = 0.
            RatMat A(chords_in.size(), chords_in.size());
            std::vector<LinExpr> rhs(chords_in.size());
            for (std::size_t r = 0; r < chords_in.size(); ++r) {
                int a = chords_in[r];
                for (int cp : members) {
                    Rat da = rs.cap_charge[cp].coeff(loop_charge(a));
                    if (da == 0) continue;
                    auto d = cap_derivative(n.elements[g.branches[g.cap_branches[cp]].element],
                                            rs.symbols);
                    // dE/dt_a = (quad * q_expr + affine) * da
                    for (std::size_t cc = 0; cc < chords_in.size(); ++cc) {
                        Rat dc = rs.cap_charge[cp].coeff(loop_charge(chords_in[cc]));
                        if (dc != 0) A(r, cc) += d.quad * da * dc;
                    }
                    LinExpr ext = rs.cap_charge[cp];
                    for (int ac : chords_in) ext.add(loop_charge(ac), -ext.coeff(loop_charge(ac)));
                    ext *= d.quad;
                    ext += d.affine;
                    ext *= da;
                    rhs[r] += ext;
                }
            }
            // Solve A t = -rhs componentwise over the affine basis.
            RatMat ainv = A.inverse();
            std::vector<LinExpr> sol(chords_in.size());
            for (std::size_t r = 0; r < chords_in.size(); ++r)
                for (std::size_t cc = 0; cc < chords_in.size(); ++cc) {
                    if (ainv(r, cc) == 0) continue;
                    LinExpr part = rhs[cc];
                    part *= -ainv(r, cc);
                    sol[r] += part;
                }
            for (std::size_t r = 0; r < chords_in.size(); ++r)
                rs.loop_solution[chords_in[r]] = sol[r];
        }

        // Substitute every solved chord everywhere.
        auto chord_lookup = [&](Var v) -> const LinExpr* {
            if (v.kind != VarKind::LoopCharge) return nullptr;
            if (!rs.loop_solution[v.index]) return nullptr;
            return &*rs.loop_solution[v.index];
        };
        for (auto& q : rs.cap_charge) q = q.substituted(chord_lookup);

        if (!nonanalytic_chords.empty()) {
            std::sort(nonanalytic_chords.begin(), nonanalytic_chords.end());
            auto cluster = std::make_shared<StationaryCluster>();
            cluster->num_unknowns = static_cast<int>(nonanalytic_chords.size());
            cluster->allow_multivalued = opt.allow_multivalued;
            for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
                std::vector<double> d(nonanalytic_chords.size(), 0.0);
                bool touched = false;
                for (std::size_t i = 0; i < nonanalytic_chords.size(); ++i) {
                    Rat c = rs.cap_charge[cp].coeff(loop_charge(nonanalytic_chords[i]));
                    if (c != 0) touched = true;
                    d[i] = rat_to_double(c);
                }
                if (!touched) continue;
                const auto& el = n.elements[g.branches[g.cap_branches[cp]].element];
                StationaryCluster::Elem e;
                e.label = el.id;
                e.d = d;
                e.base = rs.cap_charge[cp];
                for (int a : nonanalytic_chords) e.base.add(loop_charge(a), -e.base.coeff(loop_charge(a)));
                auto cd = cap_derivative(el, rs.symbols);
                e.quad_coeff = rat_to_double(cd.quad);
                e.lin_coeff = cd.affine;
                if (cd.is_qps) e.cos_amp = cd.qps_energy;
                cluster->elems.push_back(std::move(e));
            }
            if (!opt.allow_multivalued && !cluster->provably_single_valued())
                throw std::domain_error(
                    "nonanalytic capacitive-loop constraint is multivalued "
                    "(|2 pi V_Q C / 2e| > 1); pass --allow-multivalued to take the principal branch");
            rs.implicit_charge = cluster;
            rs.implicit_chords = nonanalytic_chords;
        }
    }

    // ---- Inductive islands (right null vectors) ----
    const int nislands = static_cast<int>(rs.nulls.ind_islands.size());
    if (nislands > 1) {
        bool nonanalytic = false;
        std::vector<int> members;  // inductive branch order indices crossing islands
        for (std::size_t ip = 0; ip < g.ind_branches.size(); ++ip) {
            if (!rs.ind_flux[ip].contains_kind(VarKind::IslandFlux)) continue;
            members.push_back(static_cast<int>(ip));
            if (g.branches[g.ind_branches[ip]].kind == ElementKind::JosephsonJunction)
                nonanalytic = true;
        }
        std::vector<int> bias_members;
        for (std::size_t bi = 0; bi < g.bias_elements.size(); ++bi)
            if (rs.bias_flux[bi].contains_kind(VarKind::IslandFlux))
                bias_members.push_back(static_cast<int>(bi));

        if (!nonanalytic) {
            RatMat A(nislands - 1, nislands - 1);
            std::vector<LinExpr> rhs(nislands - 1);
            auto accumulate = [&](const LinExpr& flux, const IndDeriv& d) {
                for (int j = 1; j < nislands; ++j) {
                    Rat dj = flux.coeff(island_flux(j));
                    if (dj == 0) continue;
                    for (int k = 1; k < nislands; ++k) {
                        Rat dk = flux.coeff(island_flux(k));
                        if (dk != 0) A(j - 1, k - 1) += d.quad * dj * dk;
                    }
                    LinExpr ext = flux;
                    for (int k = 1; k < nislands; ++k) ext.add(island_flux(k), -ext.coeff(island_flux(k)));
                    ext *= d.quad;
                    ext += d.affine;
                    ext *= dj;
                    rhs[j - 1] += ext;
                }
            };
            for (int ip : members)
                accumulate(rs.ind_flux[ip],
                           ind_derivative(n.elements[g.branches[g.ind_branches[ip]].element], rs.symbols));
            for (int bi : bias_members)
                accumulate(rs.bias_flux[bi],
                           ind_derivative(n.elements[g.bias_elements[bi]], rs.symbols));
            RatMat ainv = A.inverse();  // island quotient Laplacian: PD for connected circuits
            for (int j = 1; j < nislands; ++j) {
                LinExpr sol;
                for (int k = 1; k < nislands; ++k) {
                    if (ainv(j - 1, k - 1) == 0) continue;
                    LinExpr part = rhs[k - 1];
                    part *= -ainv(j - 1, k - 1);
                    sol += part;
                }
                rs.island_solution[j] = std::move(sol);
            }
            auto island_lookup = [&](Var v) -> const LinExpr* {
                if (v.kind != VarKind::IslandFlux) return nullptr;
                if (!rs.island_solution[v.index]) return nullptr;
                return &*rs.island_solution[v.index];
            };
            for (auto& f : rs.ind_flux) f = f.substituted(island_lookup);
            for (auto& f : rs.bias_flux) f = f.substituted(island_lookup);
        } else {
            auto cluster = std::make_shared<StationaryCluster>();
            cluster->num_unknowns = nislands - 1;
            cluster->allow_multivalued = opt.allow_multivalued;
            auto add_elem = [&](const LinExpr& flux, const Element& el) {
                StationaryCluster::Elem e;
                e.label = el.id;
                e.d.resize(nislands - 1, 0.0);
                for (int j = 1; j < nislands; ++j) e.d[j - 1] = rat_to_double(flux.coeff(island_flux(j)));
                e.base = flux;
                for (int j = 1; j < nislands; ++j) e.base.add(island_flux(j), -e.base.coeff(island_flux(j)));
                auto d = ind_derivative(el, rs.symbols);
                e.quad_coeff = rat_to_double(d.quad);
                e.lin_coeff = d.affine;
                if (d.is_jj) e.cos_amp = d.jj_energy;
                cluster->elems.push_back(std::move(e));
            };
            for (int ip : members) add_elem(rs.ind_flux[ip], n.elements[g.branches[g.ind_branches[ip]].element]);
            for (int bi : bias_members) add_elem(rs.bias_flux[bi], n.elements[g.bias_elements[bi]]);
            if (!opt.allow_multivalued && !cluster->provably_single_valued())
                throw std::domain_error(
                    "nonanalytic island constraint is multivalued (JJ without parallel capacitive "
                    "path); pass --allow-multivalued to take the principal branch");
            rs.implicit_flux = cluster;
            for (int j = 1; j < nislands; ++j) rs.implicit_islands.push_back(j);
        }
    }

    rs.constraints_solved = true;
}

// ---------------------------------------------------------------------------
// Noether reduction

void noether_reduce(ReducedSystem& rs, const Netlist& n, const NoetherOptions& opt) {
    if (!rs.constraints_solved)
        throw std::logic_error("noether_reduce: constraints must be solved first");
    const CircuitGraph& g = rs.graph;
    const auto& islands = rs.nulls.cap_islands;
    rs.noether_done = true;
    if (islands.size() <= 1) return;

    std::vector<int> cap_island_of(g.num_nodes(), -1);
    for (std::size_t i = 0; i < islands.size(); ++i)
        for (int v : islands[i]) cap_island_of[v] = static_cast<int>(i);

    // Build all conserved charges first (in pre-merge coordinates).
    std::vector<NoetherCharge> rows;
    for (std::size_t J = 1; J < islands.size(); ++J) {
        NoetherCharge nc;
        nc.cap_island = static_cast<int>(J);
        for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
            const auto& b = g.branches[g.cap_branches[cp]];
            int c = (cap_island_of[b.head] == static_cast<int>(J)) -
                    (cap_island_of[b.tail] == static_cast<int>(J));
            if (c != 0) nc.charge_def.add(branch_charge(static_cast<int>(cp)), c);
        }
        for (std::size_t s = 0; s < rs.tree.size(); ++s) {
            const auto& b = g.branches[g.cap_branches[rs.tree[s]]];
            int c = (cap_island_of[b.head] == static_cast<int>(J)) -
                    (cap_island_of[b.tail] == static_cast<int>(J));
            if (c != 0) nc.charge_in_pairs.add(pair_charge(static_cast<int>(s)), c);
        }
        for (const auto& [node, value] : opt.island_offsets) {
            int ni = rs.graph.num_nodes();
            for (int v = 0; v < ni; ++v)
                if (g.nodes[v] == node && cap_island_of[v] == static_cast<int>(J)) nc.constant = value;
        }
        rows.push_back(std::move(nc));
    }

    for (auto& row : rows) {
        if (row.charge_in_pairs.coeffs().empty())
            throw std::logic_error("noether_reduce: conserved charge has no tree support");

        // Batteries pin their fluxes, which breaks the island shift symmetry;
        // the conserved combination then lives in the dropped battery sector.
        bool battery_support = false;
        for (const auto& [v, c] : row.charge_in_pairs.coeffs())
            if (rs.slot_battery[v.index]) battery_support = true;
        if (battery_support) {
            row.status = NoetherCharge::Status::SkippedBattery;
            rs.noether.push_back(row);
            continue;
        }
        // A bias with one terminal on the island injects current: not conserved.
        bool bias_crossing = false;
        for (int bi : g.bias_elements) {
            const auto& el = n.elements[bi];
            int a = cap_island_of[n.node_index(el.tail)];
            int b = cap_island_of[n.node_index(el.head)];
            if ((a == row.cap_island) != (b == row.cap_island)) bias_crossing = true;
        }
        if (bias_crossing) {
            row.status = NoetherCharge::Status::SkippedBias;
            rs.noether.push_back(row);
            continue;
        }

        // Pivot: highest active slot with a unit coefficient.
        int pivot = -1;
        Rat np;
        for (const auto& [v, c] : row.charge_in_pairs.coeffs()) {
            if (!rs.slot_active[v.index]) throw std::logic_error("noether_reduce: stale slot in row");
            if (c != 1 && c != -1)
                throw std::logic_error("noether_reduce: non-unimodular coefficient in conserved charge");
            if (v.index > pivot) {
                pivot = v.index;
                np = c;
            }
        }

        // Old variables over new: Q_p = (c - sum_{f != p} n_f Q_f)/n_p,
        // Phi_f += n_f Phi_p (f != p), Phi_p := n_p Phi_p. Island temporaries
        // are potentials of their root nodes, so they shift too when the root
        // sits on the reduced island: mu_i += r_i Phi'_p.
        Rat cval = rat_from_double(row.constant);
        LinExpr q_sub(cval / np);
        std::map<int, Rat> nf;
        for (const auto& [v, c] : row.charge_in_pairs.coeffs())
            if (v.index != pivot) {
                q_sub.add(pair_charge(v.index), -c / np);
                nf[v.index] = c;
            }
        std::map<Var, LinExpr> flux_sub;
        for (const auto& [f, c] : nf) {
            LinExpr e = LinExpr::variable(pair_flux(f));
            e.add(pair_flux(pivot), c);
            flux_sub.emplace(pair_flux(f), std::move(e));
        }
        flux_sub.emplace(pair_flux(pivot), LinExpr::variable(pair_flux(pivot), np));
        // r_i = [root_i in J] - [root_0 in J]: the mu_0 = 0 gauge rides along
        // when island 0's root itself sits on the reduced island.
        std::vector<Rat> island_shift(rs.nulls.ind_islands.size(), Rat(0));
        if (!rs.nulls.ind_islands.empty()) {
            int gauge = cap_island_of[rs.nulls.ind_islands[0][0]] == row.cap_island ? 1 : 0;
            for (std::size_t i = 1; i < rs.nulls.ind_islands.size(); ++i) {
                int root = rs.nulls.ind_islands[i][0];
                island_shift[i] =
                    Rat((cap_island_of[root] == row.cap_island ? 1 : 0) - gauge);
                if (island_shift[i] != 0) {
                    LinExpr e = LinExpr::variable(island_flux(static_cast<int>(i)));
                    e.add(pair_flux(pivot), island_shift[i]);
                    flux_sub.emplace(island_flux(static_cast<int>(i)), std::move(e));
                }
            }
        }

        auto lookup = [&](Var v) -> const LinExpr* {
            if (v == pair_charge(pivot)) return &q_sub;
            auto it = flux_sub.find(v);
            if (it != flux_sub.end()) return &it->second;
            return nullptr;
        };
        for (auto& e : rs.cap_charge) e = e.substituted(lookup);
        for (auto& e : rs.ind_flux) e = e.substituted(lookup);
        for (auto& e : rs.bias_flux) e = e.substituted(lookup);
        for (auto& s : rs.loop_solution)
            if (s) *s = s->substituted(lookup);
        Var pv = pair_flux(pivot);
        for (std::size_t i = 0; i < rs.island_solution.size(); ++i) {
            auto& s = rs.island_solution[i];
            if (!s) continue;
            // The solved island mean transforms covariantly; the stored
            // expression represents the invariant combination mu - r Phi'_p.
            *s = s->substituted(lookup);
            if (s->coeff(pv) != island_shift[i])
                throw std::logic_error("noether_reduce: island solution not covariant");
            s->add(pv, -island_shift[i]);
        }
        if (rs.implicit_charge) rs.implicit_charge->substitute(lookup);
        if (rs.implicit_flux) {
            rs.implicit_flux->substitute(lookup);
            // Cluster bases lost their island parts into the unknowns; the
            // leftover pivot dependence is absorbable by shifting the unknowns.
            for (auto& el : rs.implicit_flux->elems) {
                Rat expect = 0;
                for (std::size_t i = 0; i < rs.implicit_islands.size(); ++i)
                    expect -= rat_from_double(el.d[i]) * island_shift[rs.implicit_islands[i]];
                if (el.base.coeff(pv) != expect)
                    throw std::logic_error("noether_reduce: implicit flux base not covariant");
                el.base.add(pv, -el.base.coeff(pv));
            }
        }
        for (auto& pending : rows)
            if (&pending != &row)
                pending.charge_in_pairs = pending.charge_in_pairs.substituted(lookup);

        // The Hamiltonian must have lost all dependence on the pivot flux.
        auto check_gone = [&](const LinExpr& e, const char* what) {
            if (e.coeff(pv) != 0)
                throw std::logic_error(std::string("noether_reduce: ") + what +
                                       " still depends on the eliminated flux");
        };
        for (const auto& e : rs.ind_flux) check_gone(e, "inductive branch flux");
        for (const auto& e : rs.bias_flux) check_gone(e, "bias flux");
        if (rs.implicit_flux)
            for (const auto& el : rs.implicit_flux->elems) check_gone(el.base, "implicit flux base");

        // Update descriptive definitions: Phi'_f = Phi_f - (n_f/n_p) Phi_p.
        for (const auto& [f, c] : nf) {
            LinExpr upd = rs.slot_info[pivot].flux_def;
            upd *= -(c / np);
            rs.slot_info[f].flux_def += upd;
        }

        rs.slot_active[pivot] = false;
        EliminatedPair ep;
        ep.why = EliminatedPair::Why::Noether;
        ep.label = rs.slot_info[pivot].label;
        ep.noether_constant = row.constant;
        ep.cap_island = row.cap_island;
        rs.eliminated.push_back(std::move(ep));
        row.status = NoetherCharge::Status::Applied;
        row.eliminated_slot = pivot;
        rs.noether.push_back(row);
    }

    // Bookkeeping must balance: every island beyond the first is either
    // applied or consumed by the pinned-battery sector / a bias.
    int applied = 0;
    for (const auto& r : rs.noether)
        if (r.status == NoetherCharge::Status::Applied) ++applied;
    int batteries = 0;
    for (std::size_t s = 0; s < rs.tree.size(); ++s) batteries += rs.slot_battery[s];
    int expected = static_cast<int>(rs.graph.cap_branches.size()) -
                   static_cast<int>(rs.chords.size()) - batteries - applied;
    if (rs.pair_count() != expected)
        throw std::logic_error("noether_reduce: pair-count bookkeeping does not balance");
}

// ---------------------------------------------------------------------------
// Tree transform

TreeTransform tree_transform(const ReducedSystem& a, const ReducedSystem& b) {
    const CircuitGraph& g = a.graph;
    {
        const CircuitGraph& h = b.graph;
        bool same = g.nodes == h.nodes && g.branches.size() == h.branches.size() &&
                    g.cap_branches == h.cap_branches;
        for (std::size_t i = 0; same && i < g.branches.size(); ++i)
            same = g.branches[i].tail == h.branches[i].tail &&
                   g.branches[i].head == h.branches[i].head && g.branches[i].id == h.branches[i].id;
        if (!same) throw std::invalid_argument("tree_transform: systems come from different graphs");
    }
    const std::size_t nt = a.tree.size();
    if (b.tree.size() != nt) throw std::logic_error("tree_transform: tree size mismatch");

    RatMat sigma = RatMat::identity(nt);
    std::vector<int> cur = a.tree;  // slot order preserved while swapping

    auto k_row = [&](int chord_cap_pos) {
        const auto& br = g.branches[g.cap_branches[chord_cap_pos]];
        auto path = tree_path(g, cur, br.tail, br.head);
        if (!path) throw std::logic_error("tree_transform: trees span different components");
        return *path;
    };

    for (;;) {
        int f1 = -1;
        for (int t : b.tree)
            if (std::find(cur.begin(), cur.end(), t) == cur.end()) {
                f1 = t;
                break;
            }
        if (f1 < 0) break;
        auto row = k_row(f1);
        int slot0 = -1;
        for (std::size_t s = 0; s < nt; ++s) {
            if (row[s] == 0) continue;
            if (std::find(b.tree.begin(), b.tree.end(), cur[s]) == b.tree.end()) {
                slot0 = static_cast<int>(s);
                break;
            }
        }
        if (slot0 < 0) throw std::logic_error("tree_transform: no swappable edge found");

        // Step: Phi_old = S_step . Phi_new with the new tree replacing cur[slot0] by f1.
        RatMat step = RatMat::identity(nt);
        Rat r0 = row[slot0];
        step(slot0, slot0) = Rat(1) / r0;
        for (std::size_t s = 0; s < nt; ++s) {
            if (static_cast<int>(s) == slot0 || row[s] == 0) continue;
            step(slot0, s) = -row[s] / r0;
        }
        sigma = sigma * step;
        cur[slot0] = f1;
    }

    // Permute columns into b's ascending slot order.
    RatMat perm(nt, nt);
    for (std::size_t s = 0; s < nt; ++s) {
        auto it = std::find(b.tree.begin(), b.tree.end(), cur[s]);
        perm(s, it - b.tree.begin()) = 1;
    }
    TreeTransform out;
    out.sigma = sigma * perm;
    Rat det = out.sigma.determinant();
    if (det != 1 && det != -1)
        throw std::logic_error("tree_transform: transformation is not unimodular");
    return out;
}

// ---------------------------------------------------------------------------
// Compactness

void mark_compact(ReducedSystem& rs, const EnergyExpr& h,
                  const std::map<std::string, CompactPolicy>& manual) {
    for (int mode = 0; mode < h.num_modes(); ++mode) {
        int slot = h.pair_slots[mode];
        Var qv = pair_charge(slot);
        Var fv = pair_flux(slot);

        bool quadratic_flux = false;     // any quadratic/linear flux dependence
        bool charge_cosine = false;      // QPS-type term on the conjugate charge
        bool nonint_flux_cos = false;    // flux cosine with non-integer coefficient
        bool implicit_touch = false;
        for (const auto& term : h.terms) {
            if (const auto* q = std::get_if<QuadraticTerm>(&term)) {
                if (q->a == fv || q->b == fv) quadratic_flux = true;
            } else if (const auto* l = std::get_if<LinearTerm>(&term)) {
                if (l->v == fv) quadratic_flux = true;
            } else if (const auto* c = std::get_if<CosineTerm>(&term)) {
                Rat cf = c->arg.coeff(fv);
                if (cf != 0 && !rat_is_integer(cf)) nonint_flux_cos = true;
                if (c->arg.coeff(qv) != 0) charge_cosine = true;
            } else if (const auto* im = std::get_if<ImplicitTerm>(&term)) {
                for (Var v : im->cluster->external_vars())
                    if (v == qv || v == fv) implicit_touch = true;
            }
        }
        bool auto_compact = !quadratic_flux && !charge_cosine && !nonint_flux_cos && !implicit_touch;

        auto it = manual.find(h.pair_labels[mode]);
        if (it == manual.end()) {
            rs.slot_info[slot].compact = auto_compact;
            continue;
        }
        if (it->second == CompactPolicy::ManualNonCompact) {
            rs.slot_info[slot].compact = false;
        } else if (it->second == CompactPolicy::ManualCompact) {
            if (quadratic_flux)
                throw std::domain_error("pair '" + h.pair_labels[mode] +
                                        "' cannot be compact: quadratic flux dependence");
            if (charge_cosine)
                throw std::domain_error("pair '" + h.pair_labels[mode] +
                                        "' cannot be compact: a charge cosine involves its conjugate");
            if (nonint_flux_cos || implicit_touch)
                throw std::domain_error("pair '" + h.pair_labels[mode] +
                                        "' cannot be compact: flux enters non-periodically");
            rs.slot_info[slot].compact = true;
        } else {
            rs.slot_info[slot].compact = auto_compact;
        }
    }
}

}  // namespace qcirc
