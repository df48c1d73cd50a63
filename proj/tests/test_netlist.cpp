#include <doctest.h>

#include "helpers.hpp"
#include "qcirc/constants.hpp"
#include "qcirc/netlist.hpp"

using namespace qcirc;
using namespace qcirc_test;

TEST_CASE("JJ energy parameter accepts frequency and current forms") {
    Netlist n = parse_netlist("JJ j1 1 2 EJ=5GHz");
    REQUIRE(n.elements.size() == 1);
    const auto& el = n.elements[0];
    CHECK(el.kind == ElementKind::JosephsonJunction);
    CHECK(el.tail == "1");
    CHECK(el.head == "2");
    CHECK(el.param.value == doctest::Approx(5e9 * kPlanck).epsilon(1e-15));

    Netlist n2 = parse_netlist("JJ j1 1 2 IC=30nA");
    CHECK(n2.elements[0].param.value ==
          doctest::Approx(kFluxQuantum * 30e-9 / kTwoPi).epsilon(1e-15));

    Netlist n3 = parse_netlist("QPS q1 1 2 VQ=2uV");
    CHECK(n3.elements[0].param.value ==
          doctest::Approx(kCooperPair * 2e-6 / kTwoPi).epsilon(1e-15));
}

TEST_CASE("three-element series-inductor netlist parses in file order") {
    Netlist n = parse_netlist("L l1 1 2 L=1uH\nL l2 2 3 L=2uH\nQPS q1 3 1 EQ=1GHz");
    REQUIRE(n.elements.size() == 3);
    CHECK(n.elements[0].kind == ElementKind::Inductor);
    CHECK(n.elements[0].param.value == doctest::Approx(1e-6));
    CHECK(n.elements[1].param.value == doctest::Approx(2e-6));
    CHECK(n.elements[2].kind == ElementKind::QuantumPhaseSlip);
    CHECK(n.nodes == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("unit suffixes resolve to SI") {
    CHECK(parse_netlist("C c1 1 2 C=100fF").elements[0].param.value == doctest::Approx(1e-13));
    CHECK(parse_netlist("C c1 1 2 C=1p").elements[0].param.value == doctest::Approx(1e-12));
    CHECK(parse_netlist("L l1 1 2 L=10nH").elements[0].param.value == doctest::Approx(1e-8));
    CHECK(parse_netlist("V v1 1 2 V=1mV").elements[0].param.value == doctest::Approx(1e-3));
    CHECK(parse_netlist("JJ j1 1 2 EJ=1e-24").elements[0].param.value == doctest::Approx(1e-24));
    CHECK(parse_netlist("JJ j1 1 2 EJ=2MHz").elements[0].param.value ==
          doctest::Approx(2e6 * kPlanck));
    CHECK(parse_netlist("B b1 1 2 PHI=1e-15Wb").elements[0].param.value == doctest::Approx(1e-15));
}

TEST_CASE("symbolic parameters need a PARAM declaration") {
    Netlist n = parse_netlist("PARAM Vg=0.002\nV v1 1 2 V=Vg\nC c1 2 1 C=1pF");
    CHECK(n.elements[0].param.symbolic);
    CHECK(n.elements[0].param.symbol == "Vg");
    CHECK(n.elements[0].param.factor == 1.0);
    CHECK(*n.find_param("Vg")->default_value == doctest::Approx(0.002));

    Netlist n2 = parse_netlist("PARAM phi_x\nB b1 1 2 PHI=0.5*phi_x\nC c1 2 1 C=1pF");
    CHECK(n2.elements[0].param.factor == doctest::Approx(0.5));
    CHECK_FALSE(n2.find_param("phi_x")->default_value.has_value());

    CHECK_THROWS_AS(parse_netlist("V v1 1 2 V=Vg"), ParseError);
}

TEST_CASE("parse errors carry line and column") {
    try {
        parse_netlist("C c1 1 2 C=1pF\nXX bad 1 2 C=1pF");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
        CHECK(e.column == 1);
    }
    CHECK_THROWS_AS(parse_netlist("C c1 1 2"), ParseError);                 // missing parameter
    CHECK_THROWS_AS(parse_netlist("C c1 1 2 C=1pF C=2pF"), ParseError);     // duplicate parameter
    CHECK_THROWS_AS(parse_netlist("C c1 1 2 L=1pF"), ParseError);           // wrong parameter name
    CHECK_THROWS_AS(parse_netlist("C c1 1 2 C=1pF\nL c1 2 3 L=1nH"), ParseError);  // duplicate id
    CHECK_THROWS_AS(parse_netlist("C c1 1 2 C=1pX"), ParseError);           // unknown unit
}

TEST_CASE("self-loop is accepted by the parser and rejected by validation") {
    Netlist n = parse_netlist("C c1 1 1 C=1pF");
    auto rep = validate(n);
    REQUIRE_FALSE(rep.ok());
    CHECK(rep.errors[0].code == "self-loop");
}

TEST_CASE("validation findings") {
    // Connected LC loop: clean.
    CHECK(validate(parse_netlist(read_circuit("lc.cq"))).ok());
    CHECK(validate(parse_netlist(read_circuit("lc.cq"))).warnings.empty());

    // Two disjoint LC loops: disconnected.
    auto rep = validate(parse_netlist("C c1 1 2 C=1pF\nL l1 1 2 L=1nH\n"
                                      "C c2 3 4 C=1pF\nL l2 3 4 L=1nH"));
    REQUIRE_FALSE(rep.ok());
    CHECK(rep.errors[0].code == "disconnected");

    // Nonpositive element values.
    CHECK_FALSE(validate(parse_netlist("C c1 1 2 C=0")).ok());
    CHECK_FALSE(validate(parse_netlist("L l1 1 2 L=-1nH")).ok());

    // QPS inside a capacitive loop: the singular-circuit warning.
    auto rep2 = validate(parse_netlist(read_circuit("singular_qps.cq")));
    CHECK(rep2.ok());
    REQUIRE_FALSE(rep2.warnings.empty());
    CHECK(rep2.warnings[0].code == "qps-capacitive-loop");
    CHECK(rep2.warnings[0].message.find("nonanalytic") != std::string::npos);

    // JJ with no parallel capacitive path.
    auto rep3 = validate(parse_netlist("JJ j1 1 2 EJ=5GHz\nL l1 2 3 L=10nH\nC c1 3 1 C=1pF"));
    CHECK(rep3.ok());
    bool found = false;
    for (const auto& w : rep3.warnings) found |= w.code == "jj-no-parallel-cap";
    CHECK(found);

    // Battery fractions must provide the whole loop flux.
    auto rep4 = validate(parse_netlist("PARAM phi_x\nC c1 1 2 C=1pF\nB b1 2 1 PHI=0.5*phi_x\n"
                                       "JJ j1 1 2 EJ=5GHz"));
    REQUIRE_FALSE(rep4.ok());
    CHECK(rep4.errors[0].code == "battery-fraction-sum");
}

TEST_CASE("print/parse round trip is element-wise identity") {
    for (const char* name : {"series_inductors.cq", "transmon_gate.cq", "fluxonium.cq",
                             "flux_transmon_b.cq", "fig_tree.cq"}) {
        Netlist a = parse_netlist(read_circuit(name));
        Netlist b = parse_netlist(print_netlist(a));
        REQUIRE(a.elements.size() == b.elements.size());
        for (std::size_t i = 0; i < a.elements.size(); ++i) {
            CHECK(a.elements[i].id == b.elements[i].id);
            CHECK(a.elements[i].kind == b.elements[i].kind);
            CHECK(a.elements[i].tail == b.elements[i].tail);
            CHECK(a.elements[i].head == b.elements[i].head);
            CHECK(a.elements[i].param.symbolic == b.elements[i].param.symbolic);
            CHECK(a.elements[i].param.value == b.elements[i].param.value);  // bit-exact via %.17g
            CHECK(a.elements[i].param.factor == b.elements[i].param.factor);
            CHECK(a.elements[i].param.symbol == b.elements[i].param.symbol);
        }
        REQUIRE(a.params.size() == b.params.size());
        for (std::size_t i = 0; i < a.params.size(); ++i) {
            CHECK(a.params[i].name == b.params[i].name);
            CHECK(a.params[i].default_value == b.params[i].default_value);
        }
    }
}

TEST_CASE("the whole example corpus parses and validates") {
    for (const char* name :
         {"series_inductors.cq", "series_capacitors.cq", "dualmon.cq", "transmon.cq",
          "transmon_gate.cq", "fluxonium.cq", "fluxonium_bias.cq", "flux_transmon_a.cq",
          "flux_transmon_b.cq", "singular_qps.cq", "qps_series_inductor.cq", "fig_tree.cq",
          "free_particle_pair.cq", "lc.cq"}) {
        CAPTURE(name);
        Netlist n = parse_netlist(read_circuit(name));
        CHECK(validate(n).ok());
    }
}
