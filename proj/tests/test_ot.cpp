#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "protab/ot.hpp"

using namespace protab;
using namespace protab::ot;

TEST_CASE("cosine cost hits the self, antipodal, and 45-degree cases") {
    Mat b(2, 2);
    b << 3.0, 0.0, 1.0, 1.0;
    Mat z(3, 2);
    z << 3.0, 0.0,   // equal to row 0 of b
        -3.0, 0.0,   // antipodal to row 0
         1.0, 0.0;
    Mat c = cosine_cost(z, b);
    CHECK(c(0, 0) == doctest::Approx(0.0));
    CHECK(c(1, 0) == doctest::Approx(2.0));
    CHECK(c(2, 1) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
    CHECK(c.minCoeff() >= 0.0);
    CHECK(c.maxCoeff() <= 2.0);
}

TEST_CASE("cosine cost is scale invariant and eps-floored on zero vectors") {
    Rng rng(31);
    Mat z = oracle::random_matrix(rng, 4, 3, -2.0, 2.0);
    Mat b = oracle::random_matrix(rng, 3, 3, -2.0, 2.0);
    Mat c1 = cosine_cost(z, b);
    Mat c2 = cosine_cost(Mat(5.0 * z), b);
    CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-12);

    Mat zero = Mat::Zero(1, 3);
    Mat cz = cosine_cost(zero, b);
    for (int k = 0; k < 3; ++k) CHECK(cz(0, k) == doctest::Approx(1.0));  // cos floored to 0
}

TEST_CASE("sinkhorn on the forced 1x1 plan") {
    Vec one(1);
    one << 1.0;
    Mat c(1, 1);
    c << 0.7;
    SinkhornResult r = sinkhorn(one, one, c, 0.1, 100, 1e-9);
    CHECK(r.plan.T(0, 0) == doctest::Approx(1.0));
    CHECK(r.distance == doctest::Approx(0.7));
    CHECK(r.converged);
}

TEST_CASE("sinkhorn finds the zero-cost diagonal matching") {
    Vec a(2), b(2);
    a << 0.5, 0.5;
    b << 0.5, 0.5;
    Mat c(2, 2);
    c << 0.0, 1.0, 1.0, 0.0;
    SinkhornResult r = sinkhorn(a, b, c, 0.01, 2000, 1e-8);
    CHECK(r.distance == doctest::Approx(0.0).scale(1.0).epsilon(1e-3));
    CHECK(r.plan.T(0, 0) > 0.49);
    CHECK(r.plan.T(1, 1) > 0.49);
}

TEST_CASE("sinkhorn matches the LP vertex-enumeration oracle on 3x3 instances") {
    Rng rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        Vec a = oracle::random_simplex(rng, 3);
        Vec b = oracle::random_simplex(rng, 3);
        Mat c = oracle::random_matrix(rng, 3, 3, 0.0, 2.0);
        SinkhornResult r = sinkhorn(a, b, c, 0.01, 20000, 1e-7);
        const double lp = oracle::lp_transport_bruteforce(a, b, c);
        CAPTURE(rep);
        CHECK(r.distance >= lp - 1e-6);  // entropic solution can't beat the LP
        CHECK(std::abs(r.distance - lp) < 1e-2);
        CHECK(r.plan.marginal_violation() < 1e-5);
        CHECK(r.plan.T.minCoeff() >= 0.0);
    }
}

TEST_CASE("entropic bias shrinks monotonically along a reg ladder") {
    Rng rng(33);
    for (int rep = 0; rep < 5; ++rep) {
        Vec a = oracle::random_simplex(rng, 3);
        Vec b = oracle::random_simplex(rng, 3);
        Mat c = oracle::random_matrix(rng, 3, 3, 0.0, 2.0);
        const double lp = oracle::lp_transport_bruteforce(a, b, c);
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double reg : {0.5, 0.1, 0.02}) {
            SinkhornResult r = sinkhorn(a, b, c, reg, 50000, 1e-9);
            const double gap = std::abs(r.distance - lp);
            CHECK(gap <= prev_gap + 1e-9);
            prev_gap = gap;
        }
    }
}

TEST_CASE("small reg forces the log-domain path and still converges") {
    Rng rng(34);
    Vec a = oracle::random_simplex(rng, 3);
    Vec b = oracle::random_simplex(rng, 3);
    Mat c = oracle::random_matrix(rng, 3, 3, 0.5, 2.0);
    SinkhornResult r = sinkhorn(a, b, c, 1e-3, 100000, 1e-8);
    CHECK(r.used_log_domain);
    CHECK(r.plan.marginal_violation() < 1e-7);
    const double lp = oracle::lp_transport_bruteforce(a, b, c);
    CHECK(std::abs(r.distance - lp) < 2e-3);
}

TEST_CASE("sinkhorn handles zero-weight atoms") {
    Vec a(2), b(3);
    a << 1.0, 0.0;
    b << 0.25, 0.0, 0.75;
    Mat c(2, 3);
    c << 0.2, 0.9, 0.4, 1.0, 1.0, 1.0;
    SinkhornResult r = sinkhorn(a, b, c, 1e-3, 50000, 1e-9);
    CHECK(r.plan.T.row(1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.plan.T.col(1).cwiseAbs().maxCoeff() < 1e-12);
    // forced plan: row 0 must equal b
    CHECK(r.distance == doctest::Approx(0.25 * 0.2 + 0.75 * 0.4).epsilon(1e-6));
}

TEST_CASE("sinkhorn validates inputs") {
    Vec a(2), bad(2), b3(3);
    a << 0.5, 0.5;
    bad << 0.9, 0.3;
    b3 << 0.2, 0.3, 0.5;
    Mat c = Mat::Zero(2, 2);
    CHECK_THROWS_AS((void)sinkhorn(bad, a, c, 0.1, 10, 1e-6), NonFiniteInput);
    CHECK_THROWS_AS((void)sinkhorn(a, b3, c, 0.1, 10, 1e-6), ShapeMismatch);
    CHECK_THROWS_AS((void)sinkhorn(a, a, c, -1.0, 10, 1e-6), Error);
}

TEST_CASE("non-convergence is reported, not hidden") {
    Rng rng(35);
    Vec a = oracle::random_simplex(rng, 3);
    Vec b = oracle::random_simplex(rng, 3);
    Mat c = oracle::random_matrix(rng, 3, 3, 0.0, 2.0);
    SinkhornResult r = sinkhorn(a, b, c, 0.005, 3, 1e-12);  // hopeless budget
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    CHECK(r.plan.T.minCoeff() >= 0.0);
}

TEST_CASE("singleton_ot closed form") {
    Vec r(3);
    r << 0.0, 1.0, 0.0;
    Mat c(1, 3);
    c << 0.3, 0.8, 1.4;
    CHECK(singleton_ot(r, c) == doctest::Approx(0.8));  // one-hot picks its entry

    Vec u = Vec::Constant(3, 1.0 / 3.0);
    Mat flat = Mat::Constant(1, 3, 0.6);
    CHECK(singleton_ot(u, flat) == doctest::Approx(0.6));  // constant cost invariance
    CHECK(singleton_ot(r, flat) == doctest::Approx(0.6));
}

TEST_CASE("singleton_ot agrees with the general solver at small reg") {
    Rng rng(36);
    Vec one(1);
    one << 1.0;
    for (int rep = 0; rep < 25; ++rep) {
        const int k = 2 + static_cast<int>(rng.below(5));
        Vec r = oracle::random_simplex(rng, k);
        Mat c = oracle::random_matrix(rng, 1, k, 0.0, 2.0);
        const double closed = singleton_ot(r, c);
        SinkhornResult s = sinkhorn(one, r, c, 1e-3, 200000, 1e-10);
        CAPTURE(rep);
        CHECK(std::abs(closed - s.distance) < 1e-3);
    }
}

TEST_CASE("singleton_ot is linear in r and in C") {
    Rng rng(37);
    Vec r1 = oracle::random_simplex(rng, 4);
    Vec r2 = oracle::random_simplex(rng, 4);
    Mat c1 = oracle::random_matrix(rng, 1, 4, 0.0, 2.0);
    Mat c2 = oracle::random_matrix(rng, 1, 4, 0.0, 2.0);
    const double t = 0.3;
    Vec rmix = t * r1 + (1.0 - t) * r2;
    CHECK(singleton_ot(rmix, c1) ==
          doctest::Approx(t * singleton_ot(r1, c1) + (1.0 - t) * singleton_ot(r2, c1)));
    Mat cmix = 0.5 * (c1 + c2);
    CHECK(singleton_ot(r1, cmix) ==
          doctest::Approx(0.5 * singleton_ot(r1, c1) + 0.5 * singleton_ot(r1, c2)));
}

TEST_CASE("singleton_ot validates shapes") {
    Vec r(3);
    r << 0.2, 0.3, 0.5;
    Mat c2(2, 3);
    c2.setZero();
    CHECK_THROWS_AS((void)singleton_ot(r, c2), ShapeMismatch);
    Mat c4 = Mat::Zero(1, 4);
    CHECK_THROWS_AS((void)singleton_ot(r, c4), ShapeMismatch);
}

TEST_CASE("distribution invariants are enforced") {
    DiscreteDistribution d;
    d.weights = Vec(2);
    d.weights << 0.5, 0.5;
    d.support = Mat::Zero(2, 3);
    CHECK_NOTHROW(d.validate());
    d.support = Mat::Zero(3, 3);
    CHECK_THROWS_AS(d.validate(), ShapeMismatch);
    d.support = Mat::Zero(2, 3);
    d.weights << 0.7, 0.7;
    CHECK_THROWS_AS(d.validate(), NonFiniteInput);
}
