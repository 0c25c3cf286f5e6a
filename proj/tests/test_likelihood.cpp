#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "odesurv/likelihood.hpp"
#include "odesurv/sensitivity.hpp"

using namespace odesurv;
using testutil::rand_flat;

namespace {

// spec with psi = x'beta only; zero parameters give a unit-rate hazard
ModelSpec bare_spec() {
    ModelSpec s;
    s.eta_active.clear();
    return s;
}

}  // namespace

TEST_CASE("single-observation values in closed form") {
    ModelSpec spec = bare_spec();
    ParamLayout lay = make_layout(spec, 1);
    std::vector<double> flat{0.0};

    Observation ev{1.0, 1, {0.0}, {}};
    CHECK(loglik_obs(ev, spec, lay, flat) == doctest::Approx(-1.0).epsilon(1e-9));

    Observation cens{1.0, 0, {0.0}, {}};
    CHECK(loglik_obs(cens, spec, lay, flat) == doctest::Approx(-1.0).epsilon(1e-9));

    // event at time zero contributes only the log-hazard
    Observation at0{0.0, 1, {2.0}, {}};
    std::vector<double> flat_b{0.7};
    CHECK(loglik_obs(at0, spec, lay, flat_b) == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("scores in closed form for the exponential model") {
    ModelSpec spec = bare_spec();
    ParamLayout lay = make_layout(spec, 1);
    std::vector<double> flat{0.0};

    // dl/dbeta = x (delta - Lam(y)) vanishes at y = 1
    Observation ev{1.0, 1, {1.0}, {}};
    std::vector<double> s = score_obs(ev, spec, lay, flat);
    REQUIRE(s.size() == 1);
    CHECK(std::abs(s[0]) < 1e-8);

    // censored score is minus the hazard sensitivity
    Observation cens{0.8, 0, {1.0}, {}};
    std::vector<double> sc = score_obs(cens, spec, lay, flat);
    SensitivityResult g = forward_grad(spec, lay, flat, cens.x, cens.z, cens.y);
    CHECK(sc[0] == doctest::Approx(-g.grad[0]).epsilon(1e-10));
}

TEST_CASE("scores match finite differences on a random flexible model") {
    ModelSpec spec = testutil::spec_flex(1, 3, 2.0, 3.0, true);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(19);
    std::vector<double> flat = rand_flat(lay, rng, 0.25);
    Observation o{1.2, 1, {0.6, -0.8}, {0.5}};
    ode::SolverOptions tight;
    tight.rel_tol = 1e-11;
    tight.abs_tol = 1e-13;
    std::vector<double> s = score_obs(o, spec, lay, flat, tight);
    for (int j = 0; j < lay.n_free; ++j) {
        const double h = 1e-3 * (1 + std::abs(flat[j]));
        double fd = testutil::fd5(
            [&](double step) {
                std::vector<double> p = flat;
                p[j] += step;
                return loglik_obs(o, spec, lay, p, tight);
            },
            h);
        // the quotient noise floor is the per-evaluation integration error
        // over h, so small scores are held to an absolute standard
        bool ok = std::abs(s[j] - fd) < 1e-6 ||
                  std::abs(s[j] - fd) / std::abs(fd) < 1e-5;
        CHECK(ok);
    }
}

TEST_CASE("dataset reduction equals per-observation results") {
    ModelSpec spec = testutil::spec_cox(0, 3);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(37);
    std::vector<double> flat = rand_flat(lay, rng, 0.3);

    Dataset one = testutil::rand_dataset(1, 2, 0, 7);
    LoglikResult r = loglik(one, spec, lay, flat);
    // the joint call integrates the augmented system while loglik_obs runs
    // the scalar one, so they agree to solver tolerance rather than exactly
    CHECK(r.value == doctest::Approx(loglik_obs(one.obs[0], spec, lay, flat))
                         .epsilon(1e-7));
    std::vector<double> s = score_obs(one.obs[0], spec, lay, flat);
    for (int j = 0; j < lay.n_free; ++j)
        CHECK(r.grad[j] == doctest::Approx(s[j]).epsilon(1e-14));

    // duplicating every row leaves the mean untouched
    Dataset dup = testutil::rand_dataset(40, 2, 0, 8);
    Dataset twice = dup;
    twice.obs.insert(twice.obs.end(), dup.obs.begin(), dup.obs.end());
    LoglikResult a = loglik(dup, spec, lay, flat);
    LoglikResult b = loglik(twice, spec, lay, flat);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-13));
    for (int j = 0; j < lay.n_free; ++j)
        CHECK(a.grad[j] == doctest::Approx(b.grad[j]).epsilon(1e-12));
}

TEST_CASE("dataset gradient is the mean of the scores") {
    ModelSpec spec = testutil::spec_flex(0, 3, 2.0, 3.0, true);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(43);
    std::vector<double> flat = rand_flat(lay, rng, 0.2);
    Dataset data = testutil::rand_dataset(30, 2, 0, 9);

    LoglikResult r = loglik(data, spec, lay, flat);
    std::vector<double> acc(lay.n_free, 0.0);
    double vacc = 0;
    for (const auto& o : data.obs) {
        vacc += loglik_obs(o, spec, lay, flat);
        std::vector<double> s = score_obs(o, spec, lay, flat);
        for (int j = 0; j < lay.n_free; ++j) acc[j] += s[j];
    }
    // value path and gradient path use different ODE systems, hence the
    // looser value tolerances; the scores share a path with the gradient
    CHECK(std::abs(r.value - vacc / data.n()) < 1e-7);
    for (int j = 0; j < lay.n_free; ++j)
        CHECK(std::abs(r.grad[j] - acc[j] / data.n()) < 1e-12);

    CHECK(loglik_value(data, spec, lay, flat) ==
          doctest::Approx(r.value).epsilon(1e-7));
}

TEST_CASE("value and gradient are bit-identical across worker counts") {
    ModelSpec spec = testutil::spec_coxtv(1, 3);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(47);
    std::vector<double> flat = rand_flat(lay, rng, 0.3);
    Dataset data = testutil::rand_dataset(53, 2, 1, 10);

    EvalOptions w1, w2, w7;
    w1.workers = 1;
    w2.workers = 2;
    w7.workers = 7;
    LoglikResult r1 = loglik(data, spec, lay, flat, w1);
    LoglikResult r2 = loglik(data, spec, lay, flat, w2);
    LoglikResult r7 = loglik(data, spec, lay, flat, w7);
    CHECK(r1.value == r2.value);
    CHECK(r1.value == r7.value);
    for (int j = 0; j < lay.n_free; ++j) {
        CHECK(r1.grad[j] == r2.grad[j]);
        CHECK(r1.grad[j] == r7.grad[j]);
    }

    std::vector<double> m1 = score_matrix(data, spec, lay, flat, w1);
    std::vector<double> m7 = score_matrix(data, spec, lay, flat, w7);
    REQUIRE(m1.size() == m7.size());
    for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1[i] == m7[i]);
}

TEST_CASE("quadrature oracle for the proportional likelihood") {
    // l_i = delta*(x'b + gamma(y)) - exp(x'b) * integral_0^y exp(gamma)
    ModelSpec spec = testutil::spec_cox(0, 4);
    ParamLayout lay = make_layout(spec, 2);
    std::mt19937_64 rng(59);
    std::vector<double> flat = rand_flat(lay, rng, 0.35);
    Parameters p = lay.unpack(flat);
    SplineFunction gam = gamma_spline(spec, p);
    Dataset data = testutil::rand_dataset(200, 2, 0, 11);

    ode::SolverOptions tight;
    tight.rel_tol = 1e-11;
    tight.abs_tol = 1e-13;
    EvalOptions eo;
    eo.ode = tight;
    LoglikResult r = loglik(data, spec, lay, flat, eo);

    double total = 0;
    const int m = 4000;
    for (const auto& o : data.obs) {
        double xb = p.beta[0] * o.x[0] + p.beta[1] * o.x[1];
        double integral = 0;  // Simpson over [0, y]
        for (int i = 0; i <= m; ++i) {
            double t = o.y * i / m;
            double w = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
            integral += w * std::exp(gam.value(t));
        }
        integral *= o.y / (3.0 * m);
        total += o.delta * (xb + gam.value(o.y)) - std::exp(xb) * integral;
    }
    CHECK(std::abs(r.value - total / data.n()) < 1e-8);
}

TEST_CASE("concavity along random lines for the proportional family") {
    ModelSpec spec = testutil::spec_cox(0, 3);
    ParamLayout lay = make_layout(spec, 2);
    Dataset data = testutil::rand_dataset(60, 2, 0, 12);
    std::mt19937_64 rng(67);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a = rand_flat(lay, rng, 0.3);
        std::vector<double> b = rand_flat(lay, rng, 0.3);
        std::vector<double> mid(lay.n_free);
        for (int j = 0; j < lay.n_free; ++j) mid[j] = 0.5 * (a[j] + b[j]);
        double fa = loglik_value(data, spec, lay, a);
        double fb = loglik_value(data, spec, lay, b);
        double fm = loglik_value(data, spec, lay, mid);
        // slack absorbs the solver tolerance in each of the three values
        CHECK(fm >= 0.5 * (fa + fb) - 1e-7);
    }
}

TEST_CASE("failures carry the observation index") {
    ModelSpec spec = bare_spec();
    ParamLayout lay = make_layout(spec, 1);
    std::vector<double> flat{800.0};  // exponent guard trips
    Dataset data = testutil::rand_dataset(4, 1, 0, 13);
    data.obs[2].x[0] = 1.0;
    data.obs[0].x[0] = data.obs[1].x[0] = data.obs[3].x[0] = 0.0;
    try {
        (void)loglik(data, spec, lay, flat);
        FAIL("expected LoglikError");
    } catch (const LoglikError& e) {
        CHECK(e.obs_index == 2);
    }
}
