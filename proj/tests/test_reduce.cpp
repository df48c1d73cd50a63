#include <doctest.h>

#include "helpers.hpp"
#include "qcirc/constants.hpp"
#include "qcirc/ham.hpp"
#include "qcirc/reduce.hpp"

using namespace qcirc;
using namespace qcirc_test;

namespace {

int cap_pos_of(const CircuitGraph& g, const std::string& id) {
    for (std::size_t cp = 0; cp < g.cap_branches.size(); ++cp)
        if (g.branches[g.cap_branches[cp]].id == id) return static_cast<int>(cp);
    return -1;
}

}  // namespace

TEST_CASE("spanning tree of the six-node example is {c1,c2,c3}") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("fig_tree.cq")));
    auto tree = spanning_tree(g);
    std::vector<std::string> ids;
    for (int t : tree) ids.push_back(g.branches[g.cap_branches[t]].id);
    CHECK(ids == std::vector<std::string>{"c1", "c2", "c3"});
}

TEST_CASE("forced trees are validated") {
    CircuitGraph g = build_graph(parse_netlist(read_circuit("transmon_gate.cq")));
    CHECK_NOTHROW(spanning_tree(g, {"c1", "cc"}));
    // All three edges close the loop.
    CHECK_THROWS_AS(spanning_tree(g, {"c1", "cc", "vg"}), std::invalid_argument);
    // Missing coverage of a capacitively reachable node.
    CHECK_THROWS_AS(spanning_tree(g, {"c1"}), std::invalid_argument);
    // Not a capacitive branch.
    CHECK_THROWS_AS(spanning_tree(g, {"j1", "c1"}), std::invalid_argument);
}

TEST_CASE("canonical charges: six-node example merges the parallel edges") {
    Built b = build_all(read_circuit("fig_tree.cq"));
    // Slot for c3 carries Q = q_c3 + q_c4.
    int slot = -1;
    for (int s = 0; s < b.rs.num_slots(); ++s)
        if (b.rs.slot_info[s].label == "c3") slot = s;
    REQUIRE(slot >= 0);
    const LinExpr& q = b.rs.slot_info[slot].charge_def;
    CHECK(q.coeff(branch_charge(cap_pos_of(b.g, "c3"))) == 1);
    CHECK(q.coeff(branch_charge(cap_pos_of(b.g, "c4"))) == 1);
}

TEST_CASE("canonical charges of the gate transmon match the worked example") {
    Netlist n = parse_netlist(read_circuit("transmon_gate.cq"));
    CircuitGraph g = build_graph(n);
    auto tree = spanning_tree(g, {"c1", "cc"});
    ReducedSystem rs = canonical_coordinates(n, g, null_structure(g, tree), tree);
    // Q_c1 = q_c1 - q_vg, Q_cc = q_cc - q_vg.
    REQUIRE(rs.num_slots() == 2);
    CHECK(rs.slot_info[0].charge_def.coeff(branch_charge(cap_pos_of(g, "c1"))) == 1);
    CHECK(rs.slot_info[0].charge_def.coeff(branch_charge(cap_pos_of(g, "vg"))) == -1);
    CHECK(rs.slot_info[1].charge_def.coeff(branch_charge(cap_pos_of(g, "cc"))) == 1);
    CHECK(rs.slot_info[1].charge_def.coeff(branch_charge(cap_pos_of(g, "vg"))) == -1);
    // Pair count before reduction: |C| - |Delta_C| = 3 - 1 = 2.
    CHECK(rs.pair_count() == 2);
}

TEST_CASE("single capacitive edge: Q = q, Phi = phi_head - phi_tail") {
    Built b = build_all("C c1 a b C=1pF\nJJ j1 a b EJ=5GHz");
    REQUIRE(b.rs.num_slots() == 1);
    CHECK(b.rs.slot_info[0].charge_def == LinExpr::variable(branch_charge(0)));
    CHECK(b.rs.slot_info[0].flux_def.coeff(node_flux(1)) == 1);
    CHECK(b.rs.slot_info[0].flux_def.coeff(node_flux(0)) == -1);
}

TEST_CASE("transmon loop constraint is solved in closed form") {
    Netlist n = parse_netlist(read_circuit("transmon_gate.cq"));
    CircuitGraph g = build_graph(n);
    auto tree = spanning_tree(g, {"c1", "cc"});
    ReducedSystem rs = canonical_coordinates(n, g, null_structure(g, tree), tree);
    solve_loop_constraints(rs, n);

    REQUIRE(rs.chords.size() == 1);
    REQUIRE(rs.loop_solution[0].has_value());
    const LinExpr& sol = *rs.loop_solution[0];

    // q_vg = -Ceff (Q1/C + Q2/Cc + Vg), Ceff = C Cc/(C+Cc), in units of 2e.
    // Exactness is relative to the parsed element values.
    Rat C = rat_from_double(n.find_element("c1")->param.value);
    Rat Cc = rat_from_double(n.find_element("cc")->param.value);
    Rat ceff = C * Cc / (C + Cc);
    CHECK(sol.coeff(pair_charge(0)) == -ceff / C);
    CHECK(sol.coeff(pair_charge(1)) == -ceff / Cc);
    int vg_sym = rs.symbols.index_of("Vg");
    REQUIRE(vg_sym >= 0);
    // Vg in volts, charges in 2e: coefficient is -Ceff/(2e).
    CHECK(sol.coeff(symbol_var(vg_sym)) == -ceff / rat_cooper_pair());
    CHECK(rs.constraints[0].cls == Constraint::Class::Linear);
}

TEST_CASE("no loops means no chord solutions") {
    Built b = build_all(read_circuit("lc.cq"));
    CHECK(b.rs.chords.empty());
    CHECK(b.rs.loop_solution.empty());
    CHECK(b.rs.implicit_charge == nullptr);
}

TEST_CASE("singular circuit registers a nonanalytic closure obeying the constraint") {
    Built b = build_all(read_circuit("singular_qps.cq"));
    REQUIRE(b.rs.implicit_charge != nullptr);
    bool has_nonanalytic = false;
    for (const auto& c : b.rs.constraints)
        has_nonanalytic |= c.cls == Constraint::Class::Nonanalytic &&
                           c.kind == Constraint::Kind::CapacitiveLoop;
    CHECK(has_nonanalytic);

    // At a few charges Q the solved chord satisfies
    // V_Q sin(2 pi q2 / 2e) + (Q + q2)/C = 0 to 1e-12 of the natural scale.
    double EQ = 1e9 * kPlanck;
    double VQ = kTwoPi * EQ / kCooperPair;
    double Cap = 1e-15;
    for (double qn : {0.0, 0.3, -1.7, 4.2}) {
        auto t = b.rs.implicit_charge->solve([&](Var v) -> double {
            if (v.kind == VarKind::PairCharge) return qn;
            return 0.0;
        });
        REQUIRE(t.size() == 1);
        double q2 = t[0] * kCooperPair;  // coulombs
        double Q = qn * kCooperPair;
        double resid = VQ * std::sin(kTwoPi * q2 / kCooperPair) + (Q + q2) / Cap;
        double scale = VQ + std::abs(Q + q2) / Cap + 1e-300;
        CHECK(std::abs(resid) <= 1e-12 * scale);
    }
}

TEST_CASE("multivalued constraint is refused unless allowed") {
    // Large C makes |2 pi V_Q C / 2e| > 1.
    std::string text = "C c1 1 2 C=1pF\nQPS q1 2 1 EQ=1GHz\nL l1 1 2 L=100nH";
    CHECK_THROWS_AS(build_all(text), std::domain_error);
    CHECK_NOTHROW(build_all(text, true, {}, /*allow_multivalued=*/true));
}

TEST_CASE("series capacitors: Noether reduction gives the series rule") {
    Built b = build_all(read_circuit("series_capacitors.cq"));
    CHECK(b.rs.pair_count() == 1);
    REQUIRE(b.rs.noether.size() == 1);
    CHECK(b.rs.noether[0].status == NoetherCharge::Status::Applied);

    // Kinetic coefficient: (2e)^2 (1/C1 + 1/C2)/2, exactly.
    int slot = b.rs.active_slots()[0];
    Rat c1 = rat_from_double(1e-13), c2 = rat_from_double(2e-13);
    Rat expect = rat_cooper_pair() * rat_cooper_pair() * (Rat(1) / c1 + Rat(1) / c2) / Rat(2);
    CHECK(b.h.quadratic_coeff(pair_charge(slot), pair_charge(slot)) == expect);

    // The surviving flux is the sum Phi_c1 + Phi_c2 (the JJ branch flux).
    const LinExpr& fd = b.rs.slot_info[slot].flux_def;
    CHECK(fd.coeff(node_flux(0)) != 0);
    CHECK(fd.coeff(node_flux(2)) != 0);
    CHECK(fd.coeff(node_flux(1)) == 0);
}

TEST_CASE("a nonzero Noether constant enters the eliminated kinetic term") {
    Built b = build_all(read_circuit("series_capacitors.cq"), true, {}, false, {{"2", 0.75}});
    // (Q - 0.75*2e)^2-type cross term shows up as a linear charge term.
    int slot = b.rs.active_slots()[0];
    CHECK(b.h.linear_coeff(pair_charge(slot)) != 0);
    REQUIRE(b.rs.noether.size() == 1);
    CHECK(b.rs.noether[0].constant == doctest::Approx(0.75));
}

TEST_CASE("single capacitively shunted island: Noether is a no-op") {
    Built b = build_all(read_circuit("lc.cq"));
    CHECK(b.rs.noether.empty());
    CHECK(b.rs.pair_count() == 1);
}

TEST_CASE("free-particle pair persists without the Noether reduction") {
    Built b = build_all(read_circuit("free_particle_pair.cq"), /*noether=*/false);
    CHECK(b.rs.pair_count() == 2);
    Built r = build_all(read_circuit("free_particle_pair.cq"), /*noether=*/true);
    CHECK(r.rs.pair_count() == 1);
}

TEST_CASE("pair count equals |C| - |Delta_C| before the Noether step") {
    std::mt19937 rng(7031);
    for (int trial = 0; trial < 40; ++trial) {
        CAPTURE(trial);
        Netlist n = parse_netlist(random_circuit(rng));
        if (!validate(n).ok()) continue;
        CircuitGraph g = build_graph(n);
        auto tree = spanning_tree(g);
        NullStructure ns = null_structure(g, tree);
        ReducedSystem rs = canonical_coordinates(n, g, ns, tree);
        CHECK(rs.pair_count() ==
              static_cast<int>(g.cap_branches.size()) - static_cast<int>(ns.cap_loops.size()));
    }
}

TEST_CASE("symplectic identity Omega = M.B holds on the corpus") {
    for (const char* name : {"series_inductors.cq", "series_capacitors.cq", "dualmon.cq",
                             "transmon_gate.cq", "fluxonium.cq", "fig_tree.cq",
                             "qps_series_inductor.cq"}) {
        CAPTURE(name);
        Built b = build_all(read_circuit(name), /*noether=*/false);
        RatMat bmat(b.rs.tree.size(), b.g.num_nodes());
        for (std::size_t s = 0; s < b.rs.tree.size(); ++s) {
            const auto& br = b.g.branches[b.g.cap_branches[b.rs.tree[s]]];
            bmat(s, br.head) += 1;
            bmat(s, br.tail) -= 1;
        }
        CHECK(b.rs.M * bmat == b.g.cap_incidence());
        // M has full column rank |T| and K entries lie in {-1, 0, +1}.
        CHECK(b.rs.M.rank() == b.rs.tree.size());
        for (std::size_t i = 0; i < b.rs.K.rows(); ++i)
            for (std::size_t j = 0; j < b.rs.K.cols(); ++j) {
                const Rat& k = b.rs.K(i, j);
                CHECK((k == 0 || k == 1 || k == -1));
            }
    }
}

TEST_CASE("tree transform between two trees of the six-node example") {
    Netlist n = parse_netlist(read_circuit("fig_tree.cq"));
    CircuitGraph g = build_graph(n);
    auto t1 = spanning_tree(g, {"c1", "c2", "c3"});
    auto t2 = spanning_tree(g, {"c1", "c2", "c4"});
    ReducedSystem a = canonical_coordinates(n, g, null_structure(g, t1), t1);
    ReducedSystem b = canonical_coordinates(n, g, null_structure(g, t2), t2);

    TreeTransform tf = tree_transform(a, b);
    Rat det = tf.sigma.determinant();
    CHECK((det == 1 || det == -1));
    CHECK(tf.sigma * tf.sigma.inverse() == RatMat::identity(3));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const Rat& v = tf.sigma(i, j);
            CHECK((v == 0 || v == 1 || v == -1));
        }

    // The parallel edges share endpoints and orientation, so the swapped slot
    // carries coefficient +1: row 2 now refers to c4 instead of c3.
    CHECK(tf.sigma(2, 2) == 1);

    // Identical trees give the identity.
    TreeTransform id = tree_transform(a, a);
    CHECK(id.sigma == RatMat::identity(3));
}

TEST_CASE("tree transform picks up a sign for opposed parallel edges") {
    // Same two-edge cycle but the chord is oriented against the tree edge.
    Netlist n = parse_netlist("C c1 1 2 C=100fF\nC c2 2 1 C=80fF\nL l1 1 2 L=20nH");
    CircuitGraph g = build_graph(n);
    auto t1 = spanning_tree(g, {"c1"});
    auto t2 = spanning_tree(g, {"c2"});
    ReducedSystem a = canonical_coordinates(n, g, null_structure(g, t1), t1);
    ReducedSystem b = canonical_coordinates(n, g, null_structure(g, t2), t2);
    TreeTransform tf = tree_transform(a, b);
    REQUIRE(tf.sigma.rows() == 1);
    CHECK(tf.sigma(0, 0) == -1);  // phi_c1 = -phi_c2
}

TEST_CASE("tree transform of the gate transmon is a 2x2 unimodular matrix") {
    Netlist n = parse_netlist(read_circuit("transmon_gate.cq"));
    CircuitGraph g = build_graph(n);
    auto t1 = spanning_tree(g, {"c1", "cc"});
    auto t2 = spanning_tree(g, {"c1", "vg"});
    ReducedSystem a = canonical_coordinates(n, g, null_structure(g, t1), t1);
    ReducedSystem b = canonical_coordinates(n, g, null_structure(g, t2), t2);
    TreeTransform tf = tree_transform(a, b);
    REQUIRE(tf.sigma.rows() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const Rat& v = tf.sigma(i, j);
            CHECK((v == 0 || v == 1 || v == -1));
        }
    Rat det = tf.sigma.determinant();
    CHECK((det == 1 || det == -1));
}

TEST_CASE("tree transform refuses different graphs") {
    Built a = build_all(read_circuit("lc.cq"), false);
    Built b = build_all(read_circuit("dualmon.cq"), false);
    CHECK_THROWS_AS(tree_transform(a.rs, b.rs), std::invalid_argument);
}

TEST_CASE("compactness: transmon yes, fluxonium no, dualmon no") {
    Built t = build_all(read_circuit("transmon.cq"));
    CHECK(t.rs.slot_info[t.rs.active_slots()[0]].compact);

    Built f = build_all(read_circuit("fluxonium.cq"));
    CHECK_FALSE(f.rs.slot_info[f.rs.active_slots()[0]].compact);

    Built d = build_all(read_circuit("dualmon.cq"));
    CHECK_FALSE(d.rs.slot_info[d.rs.active_slots()[0]].compact);
}

TEST_CASE("manual compact flag on a quadratic-flux pair is an error") {
    Built f = build_all(read_circuit("fluxonium.cq"));
    std::map<std::string, CompactPolicy> manual{
        {f.h.pair_labels[0], CompactPolicy::ManualCompact}};
    CHECK_THROWS_AS(mark_compact(f.rs, f.h, manual), std::domain_error);

    std::map<std::string, CompactPolicy> off{{f.h.pair_labels[0], CompactPolicy::ManualNonCompact}};
    CHECK_NOTHROW(mark_compact(f.rs, f.h, off));
}

TEST_CASE("battery slots are pinned, not dynamical") {
    Built b = build_all(read_circuit("fluxonium.cq"));
    CHECK(b.rs.pair_count() == 1);
    REQUIRE(b.rs.eliminated.size() == 1);
    CHECK(b.rs.eliminated[0].why == EliminatedPair::Why::BatteryPinned);
    // Battery pinned value: phi_ext in units of phi0.
    int sym = b.rs.symbols.index_of("phi_ext");
    CHECK(b.rs.eliminated[0].pinned_flux.coeff(symbol_var(sym)) ==
          Rat(1) / rat_flux_quantum());
}

TEST_CASE("noether charges supported on battery edges are skipped") {
    Built b = build_all(read_circuit("flux_transmon_b.cq"));
    CHECK(b.rs.pair_count() == 1);
    REQUIRE(b.rs.noether.size() == 1);
    CHECK(b.rs.noether[0].status == NoetherCharge::Status::SkippedBattery);
}
