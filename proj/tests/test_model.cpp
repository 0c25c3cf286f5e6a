#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "odesurv/model.hpp"

using namespace odesurv;
using testutil::project;
using testutil::rand_flat;

namespace {

// Gauss-Legendre 20-point nodes/weights on [-1, 1]
constexpr int kGl = 10;
constexpr double kGlX[kGl] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                              0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                              0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                              0.9931285991850949};
constexpr double kGlW[kGl] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                              0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                              0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                              0.0176140071391521};

double gl_integral(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (b - a), m = 0.5 * (a + b);
    double s = 0;
    for (int i = 0; i < kGl; ++i)
        s += kGlW[i] * (f(m + c * kGlX[i]) + f(m - c * kGlX[i]));
    return c * s;
}

}  // namespace

TEST_CASE("hazard is one at zero parameters") {
    ModelSpec spec = testutil::spec_flex(1, 3, 2.0, 3.0, false);
    ParamLayout lay = make_layout(spec, 2);
    std::vector<double> flat(lay.n_free, 0.0);
    std::vector<double> x{0.4, -1.1}, z{0.7};
    for (double t : {0.0, 0.5, 1.9})
        for (double lam : {0.0, 0.8, 2.9})
            CHECK(hazard_rhs(spec, lay, flat, x, z, t, lam) == 1.0);
}

TEST_CASE("proportional-hazards value with constant log-baseline") {
    ModelSpec spec = testutil::spec_cox(0, 3);
    ParamLayout lay = make_layout(spec, 1);
    Parameters p;
    p.beta = {1.0};
    p.a.assign(1, std::vector<double>(spec.time_knots->num_basis(), std::log(0.5)));
    p.b.clear();
    std::vector<double> flat = lay.pack(p);
    std::vector<double> x{1.0}, z;
    double f = hazard_rhs(spec, lay, flat, x, z, 0.8, 0.0);
    CHECK(f == doctest::Approx(0.5 * std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("transformation value through a projected g") {
    // q(u) = 2/(1+u): at u=1 the hazard with zero linear predictor is 1
    ModelSpec spec = testutil::spec_aft(40, 3.0);
    ParamLayout lay = make_layout(spec, 1);
    Parameters p;
    p.beta = {0.0};
    p.b = project(*spec.g_knots, [](double u) { return std::log(2.0 / (1.0 + u)); }, 600);
    p.a.assign(1, std::vector<double>{});  // no time basis, column stays empty
    std::vector<double> flat = lay.pack(p);
    std::vector<double> x{0.0}, z;
    CHECK(hazard_rhs(spec, lay, flat, x, z, 0.3, 1.0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("partials at zero and the proportional special case") {
    ModelSpec spec = testutil::spec_cox(0, 3);
    ParamLayout lay = make_layout(spec, 2);
    std::vector<double> flat(lay.n_free, 0.0);
    std::vector<double> x{1.0, 0.0}, z;
    RhsPartials rp = rhs_partials(spec, lay, flat, x, z, 0.6, 0.4);
    CHECK(rp.df_dtheta[0] == 1.0);
    CHECK(rp.df_dtheta[1] == 0.0);
    // no feedback through the state when g is absent
    CHECK(rp.df_dlam == 0.0);
}

TEST_CASE("partials match finite differences on a random flexible model") {
    ModelSpec spec = testutil::spec_flex(1, 3, 2.0, 3.0, false);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(11);
    std::vector<double> x{0.8, -0.5}, z{1.3};
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> flat = rand_flat(lay, rng);
        const double t = 0.9, lam = 1.4;
        RhsPartials rp = rhs_partials(spec, lay, flat, x, z, t, lam);
        for (int j = 0; j < lay.n_free; ++j) {
            const double h = 1e-6 * (1 + std::abs(flat[j]));
            std::vector<double> up = flat, dn = flat;
            up[j] += h;
            dn[j] -= h;
            double fd = (hazard_rhs(spec, lay, up, x, z, t, lam) -
                         hazard_rhs(spec, lay, dn, x, z, t, lam)) /
                        (2 * h);
            CHECK(std::abs(rp.df_dtheta[j] - fd) /
                      std::max(1e-8, std::abs(fd)) < 1e-5);
        }
        const double h = 1e-6;
        double fd = (hazard_rhs(spec, lay, flat, x, z, t, lam + h) -
                     hazard_rhs(spec, lay, flat, x, z, t, lam - h)) /
                    (2 * h);
        CHECK(std::abs(rp.df_dlam - fd) / std::max(1e-8, std::abs(fd)) < 1e-5);
    }
}

TEST_CASE("cumulative hazard basics and a polynomial baseline") {
    ModelSpec spec = testutil::spec_cox(0, 8);
    ParamLayout lay = make_layout(spec, 1);
    Parameters p;
    p.beta = {0.0};
    // log t^3 diverges at zero; project where the mass lives
    p.a.assign(1, project(*spec.time_knots, [](double t) { return 3.0 * std::log(t); },
                          600, 0.04, 2.0));
    p.b.clear();
    std::vector<double> flat = lay.pack(p);
    std::vector<double> x{0.0}, z;

    CHECK(cumulative_hazard(spec, lay, flat, x, z, 0.0) == 0.0);
    double lam2 = cumulative_hazard(spec, lay, flat, x, z, 2.0);
    CHECK(std::abs(lam2 - 4.0) / 4.0 < 5e-3);
}

TEST_CASE("cumulative hazard of the transformation model inverts its closed form") {
    // g = log(2/(1+u)) gives Lam + Lam^2/2 = 2t, so Lam(0.75) = 1
    ModelSpec spec = testutil::spec_aft(50, 2.5);
    ParamLayout lay = make_layout(spec, 1);
    Parameters p;
    p.beta = {0.0};
    p.b = project(*spec.g_knots, [](double u) { return std::log(2.0 / (1.0 + u)); }, 800);
    p.a.assign(1, std::vector<double>{});
    std::vector<double> flat = lay.pack(p);
    std::vector<double> x{0.0}, z;
    ode::SolverOptions tight;
    tight.rel_tol = 1e-10;
    tight.abs_tol = 1e-12;
    double lam = cumulative_hazard(spec, lay, flat, x, z, 0.75, tight);
    CHECK(std::abs(lam - 1.0) < 1e-6);
}

TEST_CASE("flat vector length bookkeeping") {
    ModelSpec cox = testutil::spec_cox(0, 6);  // q1 = 10
    cox.constraints.push_back(FixSplineLeft{SplineTarget::Gamma, 0, 0.0});
    ParamLayout l1 = make_layout(cox, 4);
    CHECK(l1.n_free == 4 + 10 - 1);

    ModelSpec flex = testutil::spec_flex(0, 6, 2.0, 3.0, false);  // q1 = q2 = 10
    flex.constraints.push_back(FixBeta{0, 1.0});
    flex.constraints.push_back(FixSplineLeft{SplineTarget::Gamma, 0, 0.0});
    flex.constraints.push_back(FixSplineLeft{SplineTarget::G, 0, 0.0});
    ParamLayout l2 = make_layout(flex, 3);
    CHECK(l2.n_free == 2 + 9 + 9);
    CHECK(static_cast<int>(l2.names.size()) == l2.n_free);
}

TEST_CASE("pack and unpack round trip with constraints held") {
    ModelSpec spec = testutil::spec_flex(1, 3, 2.0, 3.0, true);
    ParamLayout lay = make_layout(spec, 3);
    std::mt19937_64 rng(5);
    std::vector<double> flat = rand_flat(lay, rng, 1.0);
    Parameters p = lay.unpack(flat);
    CHECK(p.beta[0] == 1.0);
    CHECK(p.b[0] == 0.0);
    std::vector<double> back = lay.pack(p);
    REQUIRE(back.size() == flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) CHECK(back[i] == flat[i]);
}

TEST_CASE("layout rejects invalid constraint sets") {
    ModelSpec cox = testutil::spec_cox(0, 3);
    cox.constraints.push_back(FixBeta{5, 1.0});
    CHECK_THROWS(make_layout(cox, 2));

    ModelSpec no_g = testutil::spec_cox(0, 3);
    no_g.constraints.push_back(FixSplineLeft{SplineTarget::G, 0, 0.0});
    CHECK_THROWS(make_layout(no_g, 2));

    ModelSpec dup = testutil::spec_cox(0, 3);
    dup.constraints.push_back(FixBeta{0, 1.0});
    dup.constraints.push_back(FixBeta{0, 2.0});
    CHECK_THROWS(make_layout(dup, 2));

    ModelSpec bad_eta = testutil::spec_cox(0, 3);
    bad_eta.constraints.push_back(FixSplineLeft{SplineTarget::Eta, 0, 0.0});
    CHECK_THROWS(make_layout(bad_eta, 2));
}

TEST_CASE("exponent guard trips on overflow") {
    ModelSpec spec = testutil::spec_cox(0, 3);
    ParamLayout lay = make_layout(spec, 1);
    Parameters p;
    p.beta = {800.0};
    p.a.assign(1, std::vector<double>(spec.time_knots->num_basis(), 0.0));
    std::vector<double> flat = lay.pack(p);
    std::vector<double> x{1.0}, z;
    CHECK_THROWS_AS((void)hazard_rhs(spec, lay, flat, x, z, 0.5, 0.0), OverflowError);
}

TEST_CASE("positivity of the hazard") {
    ModelSpec spec = testutil::spec_flex(1, 3, 2.0, 3.0, false);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ut(0, 4), ul(0, 6);
    std::vector<double> x{0.3, -0.9}, z{0.5};
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> flat = rand_flat(lay, rng);
        CHECK(hazard_rhs(spec, lay, flat, x, z, ut(rng), ul(rng)) > 0.0);
    }
}

TEST_CASE("proportional reduction equals a quadrature of the baseline") {
    ModelSpec spec = testutil::spec_cox(0, 4);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(23);
    std::vector<double> flat = rand_flat(lay, rng, 0.5);
    Parameters p = lay.unpack(flat);
    SplineFunction gam = gamma_spline(spec, p);
    std::vector<double> x{0.6, -0.4}, z;
    const double xb = p.beta[0] * x[0] + p.beta[1] * x[1];
    for (double t : {0.5, 1.2, 2.0}) {
        // integrate exp(gamma) piecewise between knots for quadrature accuracy
        double integral = 0;
        std::vector<double> cuts{0.0};
        for (double k : spec.time_knots->interior())
            if (k < t) cuts.push_back(k);
        cuts.push_back(t);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            integral += gl_integral([&](double s) { return std::exp(gam.value(s)); },
                                    cuts[i], cuts[i + 1]);
        double expect = std::exp(xb) * integral;
        ode::SolverOptions tight;
        tight.rel_tol = 1e-10;
        tight.abs_tol = 1e-12;
        double got = cumulative_hazard(spec, lay, flat, x, z, t, tight);
        CHECK(std::abs(got - expect) / expect < 1e-6);
    }
}

TEST_CASE("constant shifts moving between the bases cancel") {
    ModelSpec spec = testutil::spec_flex(0, 3, 2.0, 3.0, false);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(31);
    std::vector<double> x{0.7, -0.2}, z;
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> flat = rand_flat(lay, rng);
        Parameters p = lay.unpack(flat);
        const double c = 0.37 + 0.1 * rep;
        Parameters ps = p;
        for (double& v : ps.a[0]) v += c;
        for (double& v : ps.b) v -= c;
        std::vector<double> flat_s = lay.pack(ps);
        for (double t : {0.4, 1.1, 1.9}) {
            double a = cumulative_hazard(spec, lay, flat, x, z, t);
            double b = cumulative_hazard(spec, lay, flat_s, x, z, t);
            CHECK(std::abs(a - b) / std::max(1.0, std::abs(a)) < 1e-9);
        }
    }
}

TEST_CASE("dataset validation catches malformed rows") {
    Dataset d = testutil::rand_dataset(5, 2, 0, 1);
    CHECK_NOTHROW(d.validate());

    Dataset bad_t = d;
    bad_t.obs[2].y = -0.5;
    CHECK_THROWS_AS(bad_t.validate(), DataError);

    Dataset bad_s = d;
    bad_s.obs[1].delta = 2;
    CHECK_THROWS_AS(bad_s.validate(), DataError);

    Dataset bad_x = d;
    bad_x.obs[3].x.pop_back();
    CHECK_THROWS_AS(bad_x.validate(), DataError);

    Dataset nan_x = d;
    nan_x.obs[0].x[0] = std::nan("");
    CHECK_THROWS_AS(nan_x.validate(), DataError);
}

TEST_CASE("dataset summaries") {
    Dataset d;
    d.x_names = {"x1"};
    d.obs = {{1.0, 1, {0.0}, {}}, {2.5, 0, {0.0}, {}}, {0.5, 1, {0.0}, {}}};
    CHECK(d.n() == 3);
    CHECK(d.n_events() == 2);
    CHECK(d.max_time() == 2.5);
    auto ev = d.event_times();
    REQUIRE(ev.size() == 2);
    CHECK(ev[0] == 1.0);
    CHECK(ev[1] == 0.5);
}
