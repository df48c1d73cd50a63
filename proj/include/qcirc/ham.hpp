#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qcirc/linexpr.hpp"
#include "qcirc/reduce.hpp"

namespace qcirc {

/// Terms of the structured Hamiltonian. Variables are canonical pair members
/// (charges in units of 2e, fluxes in units of phi0) or external symbols (SI).
/// Coefficients are exact rationals in those units; cosine amplitudes are
/// plain doubles (joules).
struct QuadraticTerm {
    Var a, b;    // sorted a <= b
    Rat coeff;   // joules per unit(a)*unit(b)
};

struct LinearTerm {
    Var v;
    Rat coeff;  // joules per unit(v)
};

enum class CosinePeriod { Charge2e, FluxPhi0 };

struct CosineTerm {
    double amplitude;     // joules; energy = amplitude * cos(2*pi*arg)
    LinExpr arg;          // dimensionless in 2e / phi0 units (symbols carry SI conversion)
    CosinePeriod period;
};

struct ImplicitTerm {
    std::shared_ptr<StationaryCluster> cluster;
    std::string note;
};

using Term = std::variant<QuadraticTerm, LinearTerm, CosineTerm, ImplicitTerm>;

struct DriveNote {
    std::string description;  // e.g. "Q[b1] * d/dt(0.5*phi_ext)" — exported, not solved
    std::string symbol;
};

/// Structured Hamiltonian over the reduced system's dynamical pairs.
class EnergyExpr {
public:
    std::vector<Term> terms;
    /// Pure numeric constant dropped from the term list (joules).
    double dropped_offset = 0.0;
    std::vector<DriveNote> drives;
    std::vector<std::string> warnings;

    /// Naming tables copied from the reduced system.
    std::vector<int> pair_slots;          // mode -> slot
    std::vector<std::string> pair_labels; // mode order
    SymbolTable symbols;

    int num_modes() const { return static_cast<int>(pair_slots.size()); }
    int mode_of_slot(int slot) const {
        for (std::size_t i = 0; i < pair_slots.size(); ++i)
            if (pair_slots[i] == slot) return static_cast<int>(i);
        return -1;
    }

    /// Exact coefficient lookups on the canonical (expanded) form.
    Rat quadratic_coeff(Var a, Var b) const;
    Rat linear_coeff(Var v) const;

    std::string var_name(Var v) const;
};

/// Rewrite element energies in canonical coordinates. Requires solved
/// constraints; Noether reduction is honored if it ran.
EnergyExpr build_hamiltonian(const Netlist& n, const ReducedSystem& rs);

/// Variable assignment for classical evaluation, SI units (charges in
/// coulombs, fluxes in webers, symbols in their native SI unit).
struct Assignment {
    std::map<std::string, double> pair_charges;  // pair label -> coulombs
    std::map<std::string, double> pair_fluxes;   // pair label -> webers
    std::map<std::string, double> symbols;       // symbol -> SI value
};

double eval_classical(const EnergyExpr& h, const ReducedSystem& rs, const Assignment& a);

/// Analytic gradient of eval_classical with respect to a pair charge or flux
/// (SI units: joules per coulomb / joules per weber).
double eval_gradient(const EnergyExpr& h, const ReducedSystem& rs, const Assignment& a, Var v);

/// All capacitive branch charges (coulombs, cap-branch order) at a point,
/// with loop constraints resolved. `value` supplies internal-unit pair values
/// and SI symbol values.
std::vector<double> branch_charges(const ReducedSystem& rs, const std::function<double(Var)>& value);

enum class ExportFormat { Text, Latex, Json };
std::string export_hamiltonian(const EnergyExpr& h, ExportFormat fmt);

/// Node capacitance matrix C_uv = sum_e C_e Omega_eu Omega_ev (farads).
/// Only defined when every capacitive branch is a linear capacitor.
RatMat capacitance_matrix(const Netlist& n, const CircuitGraph& g);

}  // namespace qcirc
