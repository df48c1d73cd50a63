#include <doctest.h>

#include "qcirc/constants.hpp"
#include "qcirc/linexpr.hpp"
#include "qcirc/rational.hpp"

using namespace qcirc;

TEST_CASE("rat_from_double is exact for dyadic values") {
    CHECK(rat_from_double(0.5) == Rat(1, 2));
    CHECK(rat_from_double(-3.25) == Rat(-13, 4));
    double x = 1e-15;
    CHECK(rat_to_double(rat_from_double(x)) == x);  // bit-exact round trip
    CHECK(rat_to_double(rat_flux_quantum()) == doctest::Approx(kFluxQuantum).epsilon(1e-15));
}

TEST_CASE("RatMat rank, kernel and solve are exact") {
    // Omega of the gate transmon: a 3-cycle, rank 2, one left and one right null vector.
    RatMat omega(3, 3);
    int vals[3][3] = {{-1, 1, 0}, {0, -1, 1}, {1, 0, -1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) omega(i, j) = vals[i][j];

    CHECK(omega.rank() == 2);
    auto right = omega.kernel();
    REQUIRE(right.size() == 1);
    CHECK(right[0][0] == right[0][1]);
    CHECK(right[0][1] == right[0][2]);
    auto left = omega.transposed().kernel();
    REQUIRE(left.size() == 1);
    CHECK(left[0][0] == left[0][1]);

    RatMat a(2, 2);
    a(0, 0) = Rat(1, 3);
    a(0, 1) = Rat(2);
    a(1, 0) = Rat(-1);
    a(1, 1) = Rat(1, 7);
    std::vector<Rat> b{Rat(5), Rat(9)};
    auto x = a.solve(b);
    CHECK(a(0, 0) * x[0] + a(0, 1) * x[1] == b[0]);
    CHECK(a(1, 0) * x[0] + a(1, 1) * x[1] == b[1]);

    RatMat inv = a.inverse();
    CHECK(a * inv == RatMat::identity(2));
    CHECK(a.determinant() * inv.determinant() == 1);
}

TEST_CASE("RatMat solve detects inconsistency") {
    RatMat a(2, 1);
    a(0, 0) = 1;
    a(1, 0) = 1;
    CHECK_THROWS_AS(a.solve({Rat(1), Rat(2)}), std::domain_error);
}

TEST_CASE("LinExpr substitution and product expansion") {
    LinExpr e = LinExpr::variable(pair_charge(0)) - LinExpr::variable(loop_charge(1), Rat(2));
    e.constant() = Rat(1, 2);
    LinExpr rep = LinExpr::variable(pair_charge(1), Rat(1, 3));
    auto sub = e.substituted([&](Var v) -> const LinExpr* {
        return v == loop_charge(1) ? &rep : nullptr;
    });
    CHECK(sub.coeff(pair_charge(0)) == 1);
    CHECK(sub.coeff(pair_charge(1)) == Rat(-2, 3));
    CHECK(sub.coeff(loop_charge(1)) == 0);

    QuadForm q = expand_product(e, e, Rat(2));
    CHECK(q.quad.at({pair_charge(0), pair_charge(0)}) == 2);
    CHECK(q.quad.at({pair_charge(0), loop_charge(1)}) == -8);  // 2 * 2 * (1 * -2)
    CHECK(q.lin.coeff(pair_charge(0)) == 2);                   // 2 * 2 * (1/2)
    CHECK(q.lin.constant() == Rat(1, 2));
}
