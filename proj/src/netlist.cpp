#include "qcirc/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "qcirc/constants.hpp"

namespace qcirc {

const char* kind_name(ElementKind k) {
    switch (k) {
        case ElementKind::Capacitor: return "C";
        case ElementKind::Inductor: return "L";
        case ElementKind::JosephsonJunction: return "JJ";
        case ElementKind::QuantumPhaseSlip: return "QPS";
        case ElementKind::VoltageSource: return "V";
        case ElementKind::FluxBattery: return "B";
        case ElementKind::InductiveBias: return "MI";
    }
    return "?";
}

bool kind_is_capacitive(ElementKind k) {
    return k == ElementKind::Capacitor || k == ElementKind::QuantumPhaseSlip ||
           k == ElementKind::VoltageSource || k == ElementKind::FluxBattery;
}

bool kind_is_inductive(ElementKind k) {
    return k == ElementKind::Inductor || k == ElementKind::JosephsonJunction;
}

int Netlist::node_index(const std::string& id) const {
    auto it = std::find(nodes.begin(), nodes.end(), id);
    return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
}

const ParamDecl* Netlist::find_param(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return &p;
    return nullptr;
}

const Element* Netlist::find_element(const std::string& id) const {
    for (const auto& e : elements)
        if (e.id == id) return &e;
    return nullptr;
}

namespace {

struct Token {
    std::string text;
    int column;  // 1-based
};

std::vector<Token> tokenize(const std::string& line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line[i] == '#') break;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '#') ++i;
        out.push_back({line.substr(start, i - start), static_cast<int>(start + 1)});
    }
    return out;
}

double scale_factor(char c, bool* ok) {
    *ok = true;
    switch (c) {
        case 'f': return 1e-15;
        case 'p': return 1e-12;
        case 'n': return 1e-9;
        case 'u': return 1e-6;
        case 'm': return 1e-3;
        case 'k': return 1e3;
        case 'M': return 1e6;
        case 'G': return 1e9;
    }
    *ok = false;
    return 1.0;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return !std::isdigit(static_cast<unsigned char>(s[0]));
}

}  // namespace

double parse_si_value(const std::string& token, const std::vector<std::string>& unit_names,
                      bool freq_is_energy, bool* used_freq) {
    if (used_freq) *used_freq = false;
    const char* begin = token.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw std::invalid_argument("expected a number in '" + token + "'");
    std::string suffix(end);
    double scale = 1.0;
    std::string unit = suffix;
    if (!suffix.empty()) {
        bool ok = false;
        double s = scale_factor(suffix[0], &ok);
        // A leading scale character only counts as a scale when the remainder
        // is a valid (possibly empty) unit name; "F" alone must stay a unit.
        if (ok) {
            std::string rest = suffix.substr(1);
            bool rest_is_unit = rest.empty() ||
                                std::find(unit_names.begin(), unit_names.end(), rest) != unit_names.end() ||
                                (freq_is_energy && rest == "Hz");
            if (rest_is_unit) {
                scale = s;
                unit = rest;
            }
        }
    }
    if (!unit.empty()) {
        bool known = std::find(unit_names.begin(), unit_names.end(), unit) != unit_names.end();
        if (freq_is_energy && unit == "Hz") {
            if (used_freq) *used_freq = true;
            return v * scale * kPlanck;
        }
        if (!known) throw std::invalid_argument("unknown unit '" + unit + "' in '" + token + "'");
    }
    return v * scale;
}

namespace {

struct ParamSpec {
    std::string key;
    std::vector<std::string> units;
    bool freq_is_energy = false;
    bool allow_symbol = false;
    double to_si = 1.0;  // extra conversion applied after parsing (e.g. I_C -> E_J)
};

// Main parameter and accepted alternates per element kind.
const std::map<ElementKind, std::vector<ParamSpec>>& param_specs() {
    static const std::map<ElementKind, std::vector<ParamSpec>> specs = {
        {ElementKind::Capacitor, {{"C", {"F"}, false, false, 1.0}}},
        {ElementKind::Inductor, {{"L", {"H"}, false, false, 1.0}}},
        {ElementKind::JosephsonJunction,
         {{"EJ", {"J"}, true, false, 1.0}, {"IC", {"A"}, false, false, kFluxQuantum / kTwoPi}}},
        {ElementKind::QuantumPhaseSlip,
         {{"EQ", {"J"}, true, false, 1.0}, {"VQ", {"V"}, false, false, kCooperPair / kTwoPi}}},
        {ElementKind::VoltageSource, {{"V", {"V"}, false, true, 1.0}}},
        {ElementKind::FluxBattery, {{"PHI", {"Wb"}, false, true, 1.0}}},
        {ElementKind::InductiveBias, {{"MIS", {"Wb"}, false, true, 1.0}}},
    };
    return specs;
}

ElementKind kind_from_string(const std::string& s, int line, int col) {
    if (s == "C") return ElementKind::Capacitor;
    if (s == "L") return ElementKind::Inductor;
    if (s == "JJ") return ElementKind::JosephsonJunction;
    if (s == "QPS") return ElementKind::QuantumPhaseSlip;
    if (s == "V") return ElementKind::VoltageSource;
    if (s == "B") return ElementKind::FluxBattery;
    if (s == "MI") return ElementKind::InductiveBias;
    throw ParseError(line, col, "unknown element kind '" + s + "'");
}

}  // namespace

Netlist parse_netlist(const std::string& text) {
    Netlist n;
    std::set<std::string> ids;
    std::set<std::string> symbols;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto toks = tokenize(line);
        if (toks.empty()) continue;

        if (toks[0].text == "PARAM") {
            if (toks.size() != 2)
                throw ParseError(lineno, toks[0].column, "PARAM expects a single <name>[=<value>]");
            std::string body = toks[1].text;
            auto eq = body.find('=');
            ParamDecl decl;
            decl.line = lineno;
            if (eq == std::string::npos) {
                decl.name = body;
            } else {
                decl.name = body.substr(0, eq);
                std::string val = body.substr(eq + 1);
                try {
                    decl.default_value = parse_si_value(val, {"V", "Wb", "J", "A", "F", "H"}, false);
                } catch (const std::exception& ex) {
                    throw ParseError(lineno, toks[1].column, ex.what());
                }
            }
            if (!valid_name(decl.name))
                throw ParseError(lineno, toks[1].column, "invalid symbol name '" + decl.name + "'");
            if (n.find_param(decl.name))
                throw ParseError(lineno, toks[1].column, "duplicate PARAM '" + decl.name + "'");
            n.params.push_back(decl);
            symbols.insert(decl.name);
            continue;
        }

        if (toks.size() < 4)
            throw ParseError(lineno, toks[0].column,
                             "expected '<KIND> <id> <tail> <head> <param>=<value>'");
        Element el;
        el.line = lineno;
        el.kind = kind_from_string(toks[0].text, lineno, toks[0].column);
        el.id = toks[1].text;
        if (!ids.insert(el.id).second)
            throw ParseError(lineno, toks[1].column, "duplicate element id '" + el.id + "'");
        el.tail = toks[2].text;
        el.head = toks[3].text;

        const auto& specs = param_specs().at(el.kind);
        bool have_param = false;
        for (std::size_t t = 4; t < toks.size(); ++t) {
            auto eq = toks[t].text.find('=');
            if (eq == std::string::npos)
                throw ParseError(lineno, toks[t].column, "expected <param>=<value>, got '" + toks[t].text + "'");
            std::string key = toks[t].text.substr(0, eq);
            std::string val = toks[t].text.substr(eq + 1);
            const ParamSpec* spec = nullptr;
            for (const auto& s : specs)
                if (s.key == key) spec = &s;
            if (!spec)
                throw ParseError(lineno, toks[t].column,
                                 std::string("unknown parameter '") + key + "' for element kind " +
                                     kind_name(el.kind));
            if (have_param)
                throw ParseError(lineno, toks[t].column,
                                 std::string("duplicate parameter for element '") + el.id + "'");
            have_param = true;

            // Symbolic forms: "<sym>" or "<factor>*<sym>".
            auto star = val.find('*');
            bool looks_symbolic = false;
            std::string sym;
            double factor = 1.0;
            if (star != std::string::npos) {
                sym = val.substr(star + 1);
                char* end = nullptr;
                std::string fs = val.substr(0, star);
                factor = std::strtod(fs.c_str(), &end);
                if (end != fs.c_str() + fs.size() || fs.empty())
                    throw ParseError(lineno, toks[t].column, "invalid factor '" + fs + "'");
                looks_symbolic = true;
            } else if (!val.empty() && valid_name(val)) {
                sym = val;
                looks_symbolic = true;
            }
            if (looks_symbolic) {
                if (!spec->allow_symbol)
                    throw ParseError(lineno, toks[t].column,
                                     std::string("parameter ") + key + " of " + kind_name(el.kind) +
                                         " must be numeric");
                if (!symbols.count(sym))
                    throw ParseError(lineno, toks[t].column,
                                     "symbol '" + sym + "' not declared with PARAM");
                el.param.symbolic = true;
                el.param.symbol = sym;
                el.param.factor = factor;
            } else {
                bool used_freq = false;
                double v;
                try {
                    v = parse_si_value(val, spec->units, spec->freq_is_energy, &used_freq);
                } catch (const std::exception& ex) {
                    throw ParseError(lineno, toks[t].column, ex.what());
                }
                if (!used_freq) v *= spec->to_si;
                el.param.symbolic = false;
                el.param.value = v;
            }
        }
        if (!have_param)
            throw ParseError(lineno, toks[0].column,
                             std::string("missing parameter ") + specs.front().key + "= for element '" +
                                 el.id + "'");

        for (const std::string* node : {&el.tail, &el.head})
            if (n.node_index(*node) < 0) n.nodes.push_back(*node);
        n.elements.push_back(std::move(el));
    }
    return n;
}

std::string print_netlist(const Netlist& n) {
    std::ostringstream out;
    char buf[64];
    for (const auto& p : n.params) {
        out << "PARAM " << p.name;
        if (p.default_value) {
            std::snprintf(buf, sizeof buf, "%.17g", *p.default_value);
            out << "=" << buf;
        }
        out << "\n";
    }
    for (const auto& e : n.elements) {
        out << kind_name(e.kind) << " " << e.id << " " << e.tail << " " << e.head << " ";
        out << param_specs().at(e.kind).front().key << "=";
        if (e.param.symbolic) {
            std::snprintf(buf, sizeof buf, "%.17g", e.param.factor);
            out << buf << "*" << e.param.symbol;
        } else {
            std::snprintf(buf, sizeof buf, "%.17g", e.param.value);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace qcirc
