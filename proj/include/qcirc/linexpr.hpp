#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "qcirc/rational.hpp"

namespace qcirc {

/// Variable kinds used through the reduction pipeline.
///
/// PairCharge/PairFlux index canonical pairs of the reduced system (charges in
/// units of 2e, fluxes in units of phi0). Symbol indexes the external-parameter
/// table (values in SI units). LoopCharge and IslandFlux are elimination
/// temporaries: a finished Hamiltonian must not contain them. BranchCharge and
/// NodeFlux only appear in descriptive expressions (JSON dumps, pair
/// definitions), never in energy terms.
enum class VarKind : int {
    PairCharge = 0,
    PairFlux = 1,
    Symbol = 2,
    LoopCharge = 3,
    IslandFlux = 4,
    BranchCharge = 5,
    NodeFlux = 6,
};

struct Var {
    VarKind kind;
    int index;

    friend bool operator<(const Var& a, const Var& b) {
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.index < b.index;
    }
    friend bool operator==(const Var& a, const Var& b) {
        return a.kind == b.kind && a.index == b.index;
    }
    friend bool operator!=(const Var& a, const Var& b) { return !(a == b); }
};

inline Var pair_charge(int i) { return {VarKind::PairCharge, i}; }
inline Var pair_flux(int i) { return {VarKind::PairFlux, i}; }
inline Var symbol_var(int i) { return {VarKind::Symbol, i}; }
inline Var loop_charge(int i) { return {VarKind::LoopCharge, i}; }
inline Var island_flux(int i) { return {VarKind::IslandFlux, i}; }
inline Var branch_charge(int i) { return {VarKind::BranchCharge, i}; }
inline Var node_flux(int i) { return {VarKind::NodeFlux, i}; }

/// Affine form sum(c_v * v) + k with exact rational coefficients.
class LinExpr {
public:
    LinExpr() = default;
    explicit LinExpr(Rat constant) : k_(std::move(constant)) {}
    static LinExpr variable(Var v, Rat coeff = Rat(1)) {
        LinExpr e;
        e.add(v, std::move(coeff));
        return e;
    }

    const std::map<Var, Rat>& coeffs() const { return c_; }
    const Rat& constant() const { return k_; }
    Rat& constant() { return k_; }

    bool is_constant() const { return c_.empty(); }
    bool is_zero() const { return c_.empty() && k_ == 0; }

    Rat coeff(Var v) const {
        auto it = c_.find(v);
        return it == c_.end() ? Rat(0) : it->second;
    }

    void add(Var v, Rat coeff) {
        if (coeff == 0) return;
        auto [it, inserted] = c_.emplace(v, coeff);
        if (!inserted) {
            it->second += coeff;
            if (it->second == 0) c_.erase(it);
        }
    }

    LinExpr& operator+=(const LinExpr& o) {
        for (const auto& [v, c] : o.c_) add(v, c);
        k_ += o.k_;
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o) {
        for (const auto& [v, c] : o.c_) add(v, -c);
        k_ -= o.k_;
        return *this;
    }
    LinExpr& operator*=(const Rat& f) {
        if (f == 0) {
            c_.clear();
            k_ = 0;
            return *this;
        }
        for (auto& [v, c] : c_) c *= f;
        k_ *= f;
        return *this;
    }

    friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
    friend LinExpr operator*(LinExpr a, const Rat& f) { return a *= f; }
    friend LinExpr operator*(const Rat& f, LinExpr a) { return a *= f; }
    friend LinExpr operator-(LinExpr a) { return a *= Rat(-1); }

    friend bool operator==(const LinExpr& a, const LinExpr& b) {
        return a.k_ == b.k_ && a.c_ == b.c_;
    }

    bool contains_kind(VarKind k) const {
        for (const auto& [v, c] : c_)
            if (v.kind == k) return true;
        return false;
    }

    /// Replace every occurrence of variables for which `lookup` returns a
    /// replacement expression. Non-matched variables are kept.
    LinExpr substituted(const std::function<const LinExpr*(Var)>& lookup) const {
        LinExpr out;
        out.k_ = k_;
        for (const auto& [v, c] : c_) {
            const LinExpr* rep = lookup(v);
            if (rep) {
                LinExpr scaled = *rep;
                scaled *= c;
                out += scaled;
            } else {
                out.add(v, c);
            }
        }
        return out;
    }

    double eval(const std::function<double(Var)>& value) const {
        double acc = rat_to_double(k_);
        for (const auto& [v, c] : c_) acc += rat_to_double(c) * value(v);
        return acc;
    }

private:
    std::map<Var, Rat> c_;
    Rat k_;
};

/// Quadratic form over variables: sum over unordered pairs plus an affine part.
/// Used when expanding element energies written on affine charge/flux
/// expressions into canonical IR terms.
struct QuadForm {
    std::map<std::pair<Var, Var>, Rat> quad;  // key sorted (a <= b)
    LinExpr lin;

    void add_quad(Var a, Var b, Rat coeff) {
        if (coeff == 0) return;
        if (b < a) std::swap(a, b);
        auto key = std::make_pair(a, b);
        auto [it, inserted] = quad.emplace(key, coeff);
        if (!inserted) {
            it->second += coeff;
            if (it->second == 0) quad.erase(it);
        }
    }

    QuadForm& operator+=(const QuadForm& o) {
        for (const auto& [k, c] : o.quad) add_quad(k.first, k.second, c);
        lin += o.lin;
        return *this;
    }
};

/// Expand coeff * a * b for affine a, b.
inline QuadForm expand_product(const LinExpr& a, const LinExpr& b, const Rat& coeff) {
    QuadForm q;
    if (coeff == 0) return q;
    for (const auto& [va, ca] : a.coeffs())
        for (const auto& [vb, cb] : b.coeffs()) q.add_quad(va, vb, coeff * ca * cb);
    LinExpr cross;
    for (const auto& [va, ca] : a.coeffs()) cross.add(va, ca * b.constant());
    for (const auto& [vb, cb] : b.coeffs()) cross.add(vb, cb * a.constant());
    cross *= coeff;
    cross.constant() += coeff * a.constant() * b.constant();
    q.lin += cross;
    return q;
}

}  // namespace qcirc
