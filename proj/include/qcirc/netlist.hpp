#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcirc {

enum class ElementKind {
    Capacitor,
    Inductor,
    JosephsonJunction,
    QuantumPhaseSlip,
    VoltageSource,
    FluxBattery,
    InductiveBias,
};

const char* kind_name(ElementKind k);

/// Capacitive elements carry charge variables; inductive ones flux variables.
/// Voltage sources and flux batteries are capacitive edges; an inductive bias
/// is not a branch at all (it contributes a linear node-flux energy).
bool kind_is_capacitive(ElementKind k);
bool kind_is_inductive(ElementKind k);

/// A parameter value that is either a plain number or factor * symbol,
/// both in SI units of the parameter.
struct ParamValue {
    bool symbolic = false;
    double value = 0.0;    // used when !symbolic
    double factor = 1.0;   // used when symbolic
    std::string symbol;    // used when symbolic

    double resolve(double symbol_value) const { return symbolic ? factor * symbol_value : value; }
};

struct Element {
    std::string id;
    ElementKind kind;
    std::string tail;
    std::string head;
    /// Main parameter in SI units: farads, henries, joules (E_J, E_Q),
    /// volts (source), webers (battery flux, bias M*I_s).
    ParamValue param;
    int line = 0;
};

struct ParamDecl {
    std::string name;
    std::optional<double> default_value;
    int line = 0;
};

struct Netlist {
    std::vector<Element> elements;       // file order
    std::vector<std::string> nodes;      // order of first appearance
    std::vector<ParamDecl> params;       // declared symbols

    int node_index(const std::string& id) const;
    const ParamDecl* find_param(const std::string& name) const;
    const Element* find_element(const std::string& id) const;
};

struct ParseError : std::runtime_error {
    int line;
    int column;
    ParseError(int line_, int col_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + msg),
          line(line_),
          column(col_) {}
};

/// Parse the line-based circuit format:
///   <KIND> <id> <tail> <head> <param>=<value>[unit]
///   PARAM <name>[=<value>]
///   # comment
Netlist parse_netlist(const std::string& text);

/// Canonical text form; parse(print(n)) reproduces n element-wise.
std::string print_netlist(const Netlist& n);

struct Finding {
    std::string code;
    std::string message;
    int line = 0;
};

struct ValidationReport {
    std::vector<Finding> errors;
    std::vector<Finding> warnings;
    bool ok() const { return errors.empty(); }
};

/// Structural validation: self-loops, disconnected graphs, nonpositive C/L,
/// battery bookkeeping, and the singular-circuit warnings.
ValidationReport validate(const Netlist& n);

/// Parse "<number>[scale][unit]" in SI units; `unit_names` lists the accepted
/// unit spellings ("Hz" converts a frequency to joules via E = h f when
/// `freq_is_energy`). Used by the netlist parser and by CLI --set.
double parse_si_value(const std::string& token, const std::vector<std::string>& unit_names,
                      bool freq_is_energy, bool* used_freq = nullptr);

}  // namespace qcirc
