#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "odesurv/splines.hpp"

using namespace odesurv;

namespace {

// dense least-squares projection of f onto the basis, the reference for
// approximation-quality checks
std::vector<double> project(const KnotVector& kv, double (*f)(double), int n_grid) {
    const int q = kv.num_basis();
    Eigen::MatrixXd A(n_grid, q);
    Eigen::VectorXd y(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        double t = kv.a() + (kv.b() - kv.a()) * i / (n_grid - 1.0);
        std::vector<double> row = eval_basis(kv, t);
        for (int j = 0; j < q; ++j) A(i, j) = row[j];
        y(i) = f(t);
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    return {c.data(), c.data() + q};
}

double sin34(double t) { return std::sin(0.75 * M_PI * t); }

}  // namespace

TEST_CASE("knot vector shapes") {
    KnotVector k1 = KnotVector::equal(0, 1, 0, 1);
    CHECK(k1.num_basis() == 1);
    REQUIRE(k1.full().size() == 2);
    CHECK(k1.full()[0] == 0.0);
    CHECK(k1.full()[1] == 1.0);

    KnotVector k2 = KnotVector::equal(0, 2, 6, 4);
    CHECK(k2.num_basis() == 10);
    CHECK(k2.full().size() == 6 + 2 * 4);

    KnotVector k3 = KnotVector::equal(0, 1, 1, 4);
    REQUIRE(k3.interior().size() == 1);
    CHECK(k3.interior()[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("quantile placement and duplicate collapse") {
    std::vector<double> vals{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    KnotVector kv = KnotVector::quantile(0, 1, 2, 4, vals);
    REQUIRE(kv.interior().size() == 2);
    // knots at the 1/3 and 2/3 empirical quantiles
    CHECK(kv.interior()[0] > 0.2);
    CHECK(kv.interior()[0] < 0.5);
    CHECK(kv.interior()[1] > 0.5);
    CHECK(kv.interior()[1] < 0.8);

    // ties collapse instead of producing duplicate knots
    std::vector<double> tied{0.5, 0.5, 0.5, 0.5, 0.5};
    KnotVector kt = KnotVector::quantile(0, 1, 3, 4, tied);
    CHECK(kt.interior().size() == 1);

    // nothing strictly inside the domain -> error
    std::vector<double> edge{0.0, 0.0, 0.0};
    CHECK_THROWS(KnotVector::quantile(0, 1, 2, 4, edge));
}

TEST_CASE("clamped basis values at boundaries and interior") {
    KnotVector kv = KnotVector::equal(0, 1, 4, 4);
    std::vector<double> at0 = eval_basis(kv, 0.0);
    CHECK(at0[0] == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t j = 1; j < at0.size(); ++j) CHECK(at0[j] == 0.0);

    // partition of unity
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 100; ++rep) {
        double t = u(rng);
        std::vector<double> v = eval_basis(kv, t);
        double s = std::accumulate(v.begin(), v.end(), 0.0);
        CHECK(std::abs(s - 1.0) < 1e-12);
        int nonzero = 0;
        for (double x : v) {
            CHECK(x >= 0.0);
            if (x != 0.0) ++nonzero;
        }
        CHECK(nonzero <= kv.order());
    }
}

TEST_CASE("piecewise-constant basis is an indicator") {
    KnotVector kv = KnotVector::explicit_knots(0, 1, {0.5}, 1);
    std::vector<double> v = eval_basis(kv, 0.25);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 0.0);
    std::vector<double> d = eval_basis_deriv(kv, 0.25);
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 0.0);
}

TEST_CASE("basis derivative matches finite differences") {
    KnotVector kv = KnotVector::equal(0, 1, 5, 4);
    const double t = 0.37, h = 1e-6;
    std::vector<double> d = eval_basis_deriv(kv, t);
    std::vector<double> up = eval_basis(kv, t + h), dn = eval_basis(kv, t - h);
    double dsum = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        double fd = (up[j] - dn[j]) / (2 * h);
        double scale = std::max(1.0, std::abs(fd));
        CHECK(std::abs(d[j] - fd) / scale < 1e-5);
        dsum += d[j];
    }
    CHECK(std::abs(dsum) < 1e-10);
}

TEST_CASE("spline evaluation basics") {
    KnotVector kv = KnotVector::equal(0, 2, 6, 4);
    const int q = kv.num_basis();

    std::vector<double> flat(q, 3.25);
    std::vector<double> zero(q, 0.0);
    for (double t : {0.0, 0.31, 1.0, 1.77, 2.0}) {
        CHECK(eval_spline(kv, flat, t) == doctest::Approx(3.25).epsilon(1e-13));
        CHECK(eval_spline(kv, zero, t) == 0.0);
    }

    // left endpoint equals the first coefficient exactly
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::vector<double> c(q);
    for (double& v : c) v = g(rng);
    CHECK(eval_spline(kv, c, 0.0) == c[0]);
    SplineFunction s{kv, c};
    CHECK(s.left_value() == c[0]);
}

TEST_CASE("cubic projection of a smooth target") {
    KnotVector kv = KnotVector::equal(0, 2, 6, 4);
    std::vector<double> c = project(kv, &sin34, 400);
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        double t = 2.0 * i / 199.0;
        worst = std::max(worst, std::abs(eval_spline(kv, c, t) - sin34(t)));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("spline derivative matches finite differences at random points") {
    KnotVector kv = KnotVector::equal(0, 2, 6, 4);
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g;
    std::vector<double> c(kv.num_basis());
    for (double& v : c) v = g(rng);
    std::uniform_real_distribution<double> u(0.01, 1.99);
    const double h = 1e-6;
    for (int rep = 0; rep < 100; ++rep) {
        double t = u(rng);
        double fd = (eval_spline(kv, c, t + h) - eval_spline(kv, c, t - h)) / (2 * h);
        double an = eval_spline_deriv(kv, c, t);
        CHECK(std::abs(an - fd) / std::max(1.0, std::abs(fd)) < 1e-6);
    }
}

TEST_CASE("linear continuation outside the domain") {
    KnotVector kv = KnotVector::equal(0, 2, 4, 4);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> c(kv.num_basis());
    for (double& v : c) v = g(rng);

    double vb = eval_spline(kv, c, 2.0), db = eval_spline_deriv(kv, c, 2.0);
    double va = eval_spline(kv, c, 0.0), da = eval_spline_deriv(kv, c, 0.0);
    for (double over : {0.1, 0.9, 3.0}) {
        CHECK(eval_spline(kv, c, 2.0 + over) ==
              doctest::Approx(vb + db * over).epsilon(1e-12));
        CHECK(eval_spline_deriv(kv, c, 2.0 + over) == doctest::Approx(db).epsilon(1e-12));
        CHECK(eval_spline(kv, c, -over) == doctest::Approx(va - da * over).epsilon(1e-12));
    }

    // dot(coeffs, extended basis) agrees with the extended spline value
    for (double t : {-0.5, 2.3, 4.0}) {
        std::vector<double> vals(kv.order());
        BasisScratch s;
        int first = eval_nonzero_ext(kv, t, vals.data(), s);
        double dot = 0;
        for (int j = 0; j < kv.order(); ++j) dot += c[first + j] * vals[j];
        CHECK(dot == doctest::Approx(eval_spline(kv, c, t)).epsilon(1e-12));
    }
}

TEST_CASE("bad construction is rejected") {
    CHECK_THROWS(KnotVector::equal(1, 1, 3, 4));
    CHECK_THROWS(KnotVector::equal(2, 1, 3, 4));
    CHECK_THROWS(KnotVector::explicit_knots(0, 1, {0.7, 0.3}, 4));
    CHECK_THROWS(KnotVector::explicit_knots(0, 1, {1.5}, 4));
}
