#include "qcirc/ham.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qcirc/constants.hpp"

namespace qcirc {

using ordered_json = nlohmann::ordered_json;

Rat EnergyExpr::quadratic_coeff(Var a, Var b) const {
    if (b < a) std::swap(a, b);
    Rat sum = 0;
    for (const auto& t : terms)
        if (const auto* q = std::get_if<QuadraticTerm>(&t))
            if (q->a == a && q->b == b) sum += q->coeff;
    return sum;
}

Rat EnergyExpr::linear_coeff(Var v) const {
    Rat sum = 0;
    for (const auto& t : terms)
        if (const auto* l = std::get_if<LinearTerm>(&t))
            if (l->v == v) sum += l->coeff;
    return sum;
}

std::string EnergyExpr::var_name(Var v) const {
    switch (v.kind) {
        case VarKind::PairCharge: {
            int m = mode_of_slot(v.index);
            return "n[" + (m >= 0 ? pair_labels[m] : std::to_string(v.index)) + "]";
        }
        case VarKind::PairFlux: {
            int m = mode_of_slot(v.index);
            return "f[" + (m >= 0 ? pair_labels[m] : std::to_string(v.index)) + "]";
        }
        case VarKind::Symbol:
            return symbols.names[v.index];
        default:
            return "tmp" + std::to_string(static_cast<int>(v.kind)) + "_" + std::to_string(v.index);
    }
}

namespace {

bool has_temp_vars(const LinExpr& e) {
    return e.contains_kind(VarKind::LoopCharge) || e.contains_kind(VarKind::IslandFlux);
}

void check_expressible(const EnergyExpr& h, const ReducedSystem& rs, const LinExpr& e) {
    for (const auto& [v, c] : e.coeffs()) {
        bool ok = false;
        if (v.kind == VarKind::Symbol) ok = v.index < static_cast<int>(rs.symbols.names.size());
        if (v.kind == VarKind::PairCharge || v.kind == VarKind::PairFlux)
            ok = v.index < rs.num_slots() && rs.slot_active[v.index];
        if (!ok)
            throw std::logic_error("build_hamiltonian: expression not reducible to canonical "
                                   "coordinates (internal error) near " + h.var_name(v));
    }
}

}  // namespace

EnergyExpr build_hamiltonian(const Netlist& n, const ReducedSystem& rs) {
    if (!rs.constraints_solved)
        throw std::logic_error("build_hamiltonian: constraints must be solved first");
    const CircuitGraph& g = rs.graph;

    EnergyExpr h;
    for (int s : rs.active_slots()) {
        h.pair_slots.push_back(s);
        h.pair_labels.push_back(rs.slot_info[s].label);
    }
    h.symbols = rs.symbols;

    QuadForm acc;
    std::vector<CosineTerm> cosines;

    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp) {
        const auto& el = n.elements[g.branches[g.cap_branches[cp]].element];
        const LinExpr& q = rs.cap_charge[cp];
        bool in_cluster = has_temp_vars(q);
        switch (el.kind) {
            case ElementKind::Capacitor: {
                if (in_cluster) break;
                Rat coeff = rat_cooper_pair() * rat_cooper_pair() /
                            (Rat(2) * rat_from_double(el.param.value));
                acc += expand_product(q, q, coeff);
                break;
            }
            case ElementKind::QuantumPhaseSlip: {
                if (in_cluster) break;
                CosineTerm ct;
                ct.amplitude = -el.param.value;
                ct.arg = q;
                ct.period = CosinePeriod::Charge2e;
                cosines.push_back(std::move(ct));
                break;
            }
            case ElementKind::VoltageSource: {
                if (in_cluster) break;
                LinExpr volts;
                if (el.param.symbolic)
                    volts.add(symbol_var(rs.symbols.index_of(el.param.symbol)),
                              rat_from_double(el.param.factor));
                else
                    volts.constant() = rat_from_double(el.param.value);
                acc += expand_product(q, volts, rat_cooper_pair());
                break;
            }
            case ElementKind::FluxBattery: {
                DriveNote d;
                std::string rate = el.param.symbolic
                                       ? std::to_string(el.param.factor) + "*d" + el.param.symbol + "/dt"
                                       : "0";
                d.description = "q[" + el.id + "] * (" + rate + ")";
                d.symbol = el.param.symbolic ? el.param.symbol : "";
                h.drives.push_back(std::move(d));
                break;
            }
            default:
                throw std::logic_error("build_hamiltonian: unexpected capacitive kind");
        }
    }

    for (std::size_t ip = 0; ip < g.ind_branches.size(); ++ip) {
        const auto& el = n.elements[g.branches[g.ind_branches[ip]].element];
        const LinExpr& f = rs.ind_flux[ip];
        bool in_cluster = has_temp_vars(f);
        if (el.kind == ElementKind::Inductor) {
            if (in_cluster) continue;
            Rat coeff = rat_flux_quantum() * rat_flux_quantum() /
                        (Rat(2) * rat_from_double(el.param.value));
            acc += expand_product(f, f, coeff);
        } else {  // Josephson junction
            if (in_cluster) continue;
            CosineTerm ct;
            ct.amplitude = -el.param.value;
            ct.arg = f;
            ct.period = CosinePeriod::FluxPhi0;
            cosines.push_back(std::move(ct));
        }
    }

    for (std::size_t bi = 0; bi < g.bias_elements.size(); ++bi) {
        const auto& el = n.elements[g.bias_elements[bi]];
        const LinExpr& f = rs.bias_flux[bi];
        if (has_temp_vars(f)) continue;
        LinExpr webers;
        if (el.param.symbolic)
            webers.add(symbol_var(rs.symbols.index_of(el.param.symbol)), rat_from_double(el.param.factor));
        else
            webers.constant() = rat_from_double(el.param.value);
        acc += expand_product(f, webers, rat_flux_quantum());
    }

    // Emit canonical terms: quadratics in sorted-variable order, then linear,
    // then cosines in element order, then implicit closures.
    for (const auto& [key, coeff] : acc.quad) {
        if (coeff == 0) continue;
        check_expressible(h, rs, LinExpr::variable(key.first) + LinExpr::variable(key.second));
        h.terms.push_back(QuadraticTerm{key.first, key.second, coeff});
    }
    for (const auto& [v, coeff] : acc.lin.coeffs()) {
        check_expressible(h, rs, LinExpr::variable(v));
        h.terms.push_back(LinearTerm{v, coeff});
    }
    h.dropped_offset += rat_to_double(acc.lin.constant());
    for (auto& ct : cosines) {
        if (ct.arg.coeffs().empty()) {
            h.dropped_offset += ct.amplitude * std::cos(kTwoPi * rat_to_double(ct.arg.constant()));
            continue;
        }
        check_expressible(h, rs, ct.arg);
        h.terms.push_back(std::move(ct));
    }
    if (rs.implicit_charge) {
        for (const auto& e : rs.implicit_charge->elems) check_expressible(h, rs, e.base);
        h.terms.push_back(ImplicitTerm{rs.implicit_charge, "nonanalytic capacitive-loop constraint"});
    }
    if (rs.implicit_flux) {
        for (const auto& e : rs.implicit_flux->elems) check_expressible(h, rs, e.base);
        h.terms.push_back(ImplicitTerm{rs.implicit_flux, "nonanalytic island constraint"});
    }

    // Positive-semidefiniteness of the charge quadratic form (kinetic energy).
    {
        std::vector<int> modes = h.pair_slots;
        int nm = static_cast<int>(modes.size());
        Eigen::MatrixXd qq = Eigen::MatrixXd::Zero(nm, nm);
        double scale = 0.0;
        for (const auto& t : h.terms) {
            const auto* q = std::get_if<QuadraticTerm>(&t);
            if (!q || q->a.kind != VarKind::PairCharge || q->b.kind != VarKind::PairCharge) continue;
            int i = h.mode_of_slot(q->a.index), j = h.mode_of_slot(q->b.index);
            double c = rat_to_double(q->coeff);
            scale = std::max(scale, std::abs(c));
            if (i == j)
                qq(i, i) += c;
            else {
                qq(i, j) += c / 2;
                qq(j, i) += c / 2;
            }
        }
        if (nm > 0 && scale > 0) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qq, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-12 * scale)
                h.warnings.push_back("charge quadratic form is not positive semidefinite");
        }
    }
    return h;
}

namespace {

std::function<double(Var)> make_value_fn(const EnergyExpr& h, const ReducedSystem& rs,
                                         const Assignment& a) {
    return [&h, &rs, &a](Var v) -> double {
        switch (v.kind) {
            case VarKind::PairCharge: {
                int m = h.mode_of_slot(v.index);
                auto it = a.pair_charges.find(h.pair_labels[m]);
                if (it == a.pair_charges.end())
                    throw std::invalid_argument("eval: missing charge for pair '" + h.pair_labels[m] + "'");
                return it->second / kCooperPair;
            }
            case VarKind::PairFlux: {
                int m = h.mode_of_slot(v.index);
                auto it = a.pair_fluxes.find(h.pair_labels[m]);
                if (it == a.pair_fluxes.end())
                    throw std::invalid_argument("eval: missing flux for pair '" + h.pair_labels[m] + "'");
                return it->second / kFluxQuantum;
            }
            case VarKind::Symbol: {
                const std::string& name = h.symbols.names[v.index];
                auto it = a.symbols.find(name);
                if (it != a.symbols.end()) return it->second;
                if (h.symbols.defaults[v.index]) return *h.symbols.defaults[v.index];
                throw std::invalid_argument("eval: unresolved symbol '" + name + "'");
            }
            default:
                throw std::logic_error("eval: temporary variable in finished Hamiltonian");
        }
    };
}

}  // namespace

double eval_classical(const EnergyExpr& h, const ReducedSystem& rs, const Assignment& a) {
    auto value = make_value_fn(h, rs, a);
    double total = 0.0;
    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t))
            total += rat_to_double(q->coeff) * value(q->a) * value(q->b);
        else if (const auto* l = std::get_if<LinearTerm>(&t))
            total += rat_to_double(l->coeff) * value(l->v);
        else if (const auto* c = std::get_if<CosineTerm>(&t))
            total += c->amplitude * std::cos(kTwoPi * c->arg.eval(value));
        else if (const auto* im = std::get_if<ImplicitTerm>(&t))
            total += im->cluster->energy(value);
    }
    return total;
}

double eval_gradient(const EnergyExpr& h, const ReducedSystem& rs, const Assignment& a, Var v) {
    auto value = make_value_fn(h, rs, a);
    double total = 0.0;
    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
            if (q->a == v) total += rat_to_double(q->coeff) * value(q->b);
            if (q->b == v) total += rat_to_double(q->coeff) * value(q->a);
        } else if (const auto* l = std::get_if<LinearTerm>(&t)) {
            if (l->v == v) total += rat_to_double(l->coeff);
        } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
            Rat cf = c->arg.coeff(v);
            if (cf != 0)
                total += -c->amplitude * kTwoPi * rat_to_double(cf) *
                         std::sin(kTwoPi * c->arg.eval(value));
        } else if (const auto* im = std::get_if<ImplicitTerm>(&t)) {
            total += im->cluster->denergy(v, value);
        }
    }
    // Convert from internal units to SI derivative.
    if (v.kind == VarKind::PairCharge) return total / kCooperPair;
    if (v.kind == VarKind::PairFlux) return total / kFluxQuantum;
    return total;
}

std::vector<double> branch_charges(const ReducedSystem& rs, const std::function<double(Var)>& value) {
    std::vector<double> loop_vals(rs.chords.size(), 0.0);
    for (std::size_t a = 0; a < rs.chords.size(); ++a)
        if (rs.loop_solution[a]) loop_vals[a] = rs.loop_solution[a]->eval(value);
    if (rs.implicit_charge) {
        auto t = rs.implicit_charge->solve(value);
        for (std::size_t i = 0; i < rs.implicit_chords.size(); ++i)
            loop_vals[rs.implicit_chords[i]] = t[i];
    }
    auto full = [&](Var v) -> double {
        if (v.kind == VarKind::LoopCharge) return loop_vals[v.index];
        return value(v);
    };
    std::vector<double> out(rs.cap_charge.size());
    for (std::size_t cp = 0; cp < rs.cap_charge.size(); ++cp)
        out[cp] = rs.cap_charge[cp].eval(full) * kCooperPair;  // coulombs
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string lin_to_string(const EnergyExpr& h, const LinExpr& e, bool latex) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [v, c] : e.coeffs()) {
        Rat ac = c < 0 ? -c : c;
        std::string name = h.var_name(v);
        if (latex && v.kind != VarKind::Symbol) {
            // n[id] -> n_{id}
            auto lb = name.find('[');
            name = name.substr(0, lb) + "_{" + name.substr(lb + 1, name.size() - lb - 2) + "}";
        }
        if (first && c < 0) out << "-";
        if (!first) out << (c < 0 ? " - " : " + ");
        if (ac != 1) out << rat_to_string(ac) << (latex ? " " : "*");
        out << name;
        first = false;
    }
    if (e.constant() != 0 || first) {
        double k = rat_to_double(e.constant());
        if (!first) out << (k < 0 ? " - " : " + ") << fmt_short(std::abs(k));
        else out << fmt_short(k);
    }
    return out.str();
}

ordered_json lin_to_json(const EnergyExpr& h, const LinExpr& e) {
    ordered_json terms = ordered_json::array();
    for (const auto& [v, c] : e.coeffs()) {
        ordered_json t;
        t["var"] = h.var_name(v);
        t["coeff"] = rat_to_double(c);
        t["coeff_exact"] = rat_to_string(c);
        terms.push_back(t);
    }
    ordered_json out;
    out["vars"] = terms;
    out["constant"] = rat_to_double(e.constant());
    return out;
}

}  // namespace

std::string export_hamiltonian(const EnergyExpr& h, ExportFormat fmt) {
    if (fmt == ExportFormat::Json) {
        ordered_json j;
        j["schema_version"] = "1";
        j["pairs"] = h.pair_labels;
        ordered_json syms = ordered_json::array();
        for (std::size_t i = 0; i < h.symbols.names.size(); ++i) {
            ordered_json s;
            s["name"] = h.symbols.names[i];
            if (h.symbols.defaults[i]) s["default"] = *h.symbols.defaults[i];
            syms.push_back(s);
        }
        j["symbols"] = syms;
        ordered_json terms = ordered_json::array();
        for (const auto& t : h.terms) {
            ordered_json jt;
            if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
                jt["type"] = "quadratic";
                jt["vars"] = {h.var_name(q->a), h.var_name(q->b)};
                jt["coeff"] = rat_to_double(q->coeff);
                jt["coeff_exact"] = rat_to_string(q->coeff);
            } else if (const auto* l = std::get_if<LinearTerm>(&t)) {
                jt["type"] = "linear";
                jt["vars"] = {h.var_name(l->v)};
                jt["coeff"] = rat_to_double(l->coeff);
                jt["coeff_exact"] = rat_to_string(l->coeff);
            } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
                jt["type"] = "cosine";
                jt["amplitude"] = c->amplitude;
                jt["period"] = c->period == CosinePeriod::Charge2e ? "2e" : "phi0";
                jt["argument"] = lin_to_json(h, c->arg);
            } else if (const auto* im = std::get_if<ImplicitTerm>(&t)) {
                jt["type"] = "implicit";
                jt["note"] = im->note;
                ordered_json vars = ordered_json::array();
                for (Var v : im->cluster->external_vars()) vars.push_back(h.var_name(v));
                jt["vars"] = vars;
            }
            terms.push_back(jt);
        }
        j["terms"] = terms;
        j["dropped_offset"] = h.dropped_offset;
        ordered_json drives = ordered_json::array();
        for (const auto& d : h.drives) {
            ordered_json jd;
            jd["description"] = d.description;
            if (!d.symbol.empty()) jd["symbol"] = d.symbol;
            drives.push_back(jd);
        }
        j["drive_terms"] = drives;
        return j.dump(2);
    }

    const bool latex = fmt == ExportFormat::Latex;
    std::ostringstream out;
    out << (latex ? "H = " : "H = ");
    bool first = true;
    auto sep = [&](double sign) {
        if (first) {
            if (sign < 0) out << "-";
        } else {
            out << (sign < 0 ? " - " : " + ");
        }
        first = false;
    };
    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
            double c = rat_to_double(q->coeff);
            sep(c);
            std::string a = h.var_name(q->a), b = h.var_name(q->b);
            if (latex) {
                auto fix = [](std::string s) {
                    auto lb = s.find('[');
                    if (lb == std::string::npos) return s;
                    return s.substr(0, lb) + "_{" + s.substr(lb + 1, s.size() - lb - 2) + "}";
                };
                a = fix(a);
                b = fix(b);
            }
            out << fmt_short(std::abs(c)) << (latex ? " \\, " : "*");
            if (q->a == q->b)
                out << a << (latex ? "^2" : "^2");
            else
                out << a << (latex ? " " : "*") << b;
        } else if (const auto* l = std::get_if<LinearTerm>(&t)) {
            double c = rat_to_double(l->coeff);
            sep(c);
            out << fmt_short(std::abs(c)) << (latex ? " \\, " : "*") << h.var_name(l->v);
        } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
            sep(c->amplitude);
            out << fmt_short(std::abs(c->amplitude));
            if (latex)
                out << " \\cos\\left(2\\pi(" << lin_to_string(h, c->arg, true) << ")\\right)";
            else
                out << "*cos(2*pi*(" << lin_to_string(h, c->arg, false) << "))";
        } else if (std::get_if<ImplicitTerm>(&t)) {
            sep(1.0);
            out << (latex ? "E_{\\mathrm{implicit}}" : "E_implicit(...)");
        }
    }
    if (first) out << "0";
    return out.str();
}

RatMat capacitance_matrix(const Netlist& n, const CircuitGraph& g) {
    for (int p : g.cap_branches) {
        const auto& el = n.elements[g.branches[p].element];
        if (el.kind != ElementKind::Capacitor)
            throw std::domain_error("capacitance_matrix: capacitive branch '" + el.id +
                                    "' is not a linear capacitor");
    }
    RatMat c(g.num_nodes(), g.num_nodes());
    for (int p : g.cap_branches) {
        const auto& b = g.branches[p];
        Rat ce = rat_from_double(n.elements[b.element].param.value);
        // Omega_eu Omega_ev is +1 on (head,head),(tail,tail) and -1 across.
        c(b.head, b.head) += ce;
        c(b.tail, b.tail) += ce;
        c(b.head, b.tail) -= ce;
        c(b.tail, b.head) -= ce;
    }
    return c;
}

}  // namespace qcirc
