#include "odesurv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "odesurv/parallel.hpp"
#include "odesurv/rng.hpp"

namespace odesurv {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Censoring upper bounds frozen from 1e5-draw pilot runs targeting ~25%
// censoring (s1 uses the fixed U(0,3) of its design, ~50%).
constexpr double kCensorS1 = 3.0;
constexpr double kCensorS21 = 4.76;
constexpr double kCensorS22 = 2.86;
constexpr double kCensorS23 = 3.53;
constexpr double kCensorS24 = 1.95;

}  // namespace

int StudyDesign::d1() const { return id == DesignId::S1 ? 4 : 3; }
int StudyDesign::d2() const { return id == DesignId::S1 ? 1 : 0; }

double StudyDesign::alpha(double t) const {
    switch (id) {
        case DesignId::S1: return 0.5;
        case DesignId::S2_1: return t * t * t;
        case DesignId::S2_2: return 1.0;
        case DesignId::S2_3: return std::log(1.0 + t);
        case DesignId::S2_4: return 1.0 + std::cos(kPi * t + 1.0);
    }
    return 0;
}

double StudyDesign::q(double u) const {
    switch (id) {
        case DesignId::S1: return 1.0;
        case DesignId::S2_1: return 1.0;
        case DesignId::S2_2: return 2.0 / (1.0 + u);
        case DesignId::S2_3:
        case DesignId::S2_4: return std::log(1.0 + u) + 2.0;
    }
    return 0;
}

double StudyDesign::eta(double t) const {
    return id == DesignId::S1 ? std::sin(3.0 * kPi * t / 4.0) : 0.0;
}

bool StudyDesign::has_closed_form() const {
    return id == DesignId::S2_1 || id == DesignId::S2_2;
}

StudyDesign make_design(const std::string& name, int n, std::uint64_t seed,
                        double censor_upper) {
    StudyDesign d;
    d.name = name;
    d.n = n;
    d.seed = seed;
    if (name == "s1") {
        d.id = DesignId::S1;
        d.beta = {1.0, -1.0, -1.0, 1.0};
        d.censor_upper = kCensorS1;
    } else if (name == "s2_1") {
        d.id = DesignId::S2_1;
        d.beta = {1.0, 1.0, 1.0};
        d.censor_upper = kCensorS21;
    } else if (name == "s2_2") {
        d.id = DesignId::S2_2;
        d.beta = {1.0, 1.0, 1.0};
        d.censor_upper = kCensorS22;
    } else if (name == "s2_3") {
        d.id = DesignId::S2_3;
        d.beta = {1.0, 1.0, 1.0};
        d.censor_upper = kCensorS23;
    } else if (name == "s2_4") {
        d.id = DesignId::S2_4;
        d.beta = {1.0, 1.0, 1.0};
        d.censor_upper = kCensorS24;
    } else {
        throw std::invalid_argument("unknown study design: " + name);
    }
    if (censor_upper > 0) d.censor_upper = censor_upper;
    d.t_max = 10.0 * d.censor_upper;
    return d;
}

namespace {

void draw_covariates(const StudyDesign& d, StreamRng& rng, std::vector<double>& x,
                     std::vector<double>& z) {
    if (d.id == DesignId::S1) {
        // AR(1) with rho = 0.5, unit marginal variances, 5 components;
        // the fifth enters through the time-varying effect
        double prev = 0;
        double all[5];
        for (int k = 0; k < 5; ++k) {
            double e = rng.normal();
            prev = (k == 0) ? e : 0.5 * prev + std::sqrt(0.75) * e;
            all[k] = prev;
        }
        x.assign(all, all + 4);
        z.assign(1, all[4]);
    } else {
        // (x1, x2) zero-mean bivariate normal, var 0.5, cov 0.2; x3 ~ Bern(0.5)
        double z1 = rng.normal(), z2 = rng.normal();
        double x1 = std::sqrt(0.5) * z1;
        double c1 = 0.2 / std::sqrt(0.5);
        double c2 = std::sqrt(0.5 - c1 * c1);
        double x2 = c1 * z1 + c2 * z2;
        double x3 = static_cast<double>(rng.bernoulli(0.5));
        x = {x1, x2, x3};
        z.clear();
    }
}

std::optional<double> draw_with_horizon(const StudyDesign& d, std::span<const double> x,
                                        std::span<const double> z, double u,
                                        double horizon) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("u must lie in (0,1)");
    const double e = -std::log(u);
    double v = 0;
    for (std::size_t k = 0; k < x.size(); ++k) v += d.beta[k] * x[k];

    switch (d.id) {
        case DesignId::S2_1: {
            // L(t) = e^v t^4 / 4
            double t = std::pow(4.0 * e * std::exp(-v), 0.25);
            if (t > horizon) return std::nullopt;
            return t;
        }
        case DesignId::S2_2: {
            // L + L^2/2 = 2 e^v t
            double t = (e + 0.5 * e * e) * std::exp(-v) / 2.0;
            if (t > horizon) return std::nullopt;
            return t;
        }
        default: break;
    }

    const double zeff = d.id == DesignId::S1 && !z.empty() ? z[0] : 0.0;
    ode::IvpProblem p;
    p.rhs = [&d, v, zeff](double t, double lam) {
        double loglin = v + d.eta(t) * zeff;
        return d.alpha(t) * std::exp(loglin) * d.q(lam);
    };
    p.t0 = 0;
    p.y0 = 0;
    p.t_end = horizon;
    ode::SolverOptions opts;
    opts.rel_tol = 1e-10;
    opts.abs_tol = 1e-12;
    return ode::first_passage_time(p, e, opts);
}

}  // namespace

std::optional<double> draw_event_time(const StudyDesign& d, std::span<const double> x,
                                      std::span<const double> z, double u) {
    return draw_with_horizon(d, x, z, u, d.t_max);
}

Dataset gen_dataset(const StudyDesign& d, int replicate) {
    Dataset data;
    if (d.id == DesignId::S1) {
        data.x_names = {"x1", "x2", "x3", "x4"};
        data.z_names = {"x5"};
    } else {
        data.x_names = {"x1", "x2", "x3"};
    }
    data.obs.resize(d.n);
    for (int i = 0; i < d.n; ++i) {
        StreamRng rng(d.seed, static_cast<std::uint64_t>(replicate),
                      static_cast<std::uint64_t>(i));
        Observation& o = data.obs[i];
        draw_covariates(d, rng, o.x, o.z);
        const double u_event = rng.uniform();
        const double u_cens = rng.uniform();
        const double c = u_cens * d.censor_upper;
        // events past the censoring time are censored either way, so the
        // passage search can stop at c
        auto t = draw_with_horizon(d, o.x, o.z, u_event, c);
        if (t) {
            o.y = *t;
            o.delta = 1;
        } else {
            o.y = c;
            o.delta = 0;
        }
    }
    return data;
}

double censoring_rate(const Dataset& data) {
    if (data.obs.empty()) return 0;
    double c = 0;
    for (const auto& o : data.obs) c += (o.delta == 0) ? 1.0 : 0.0;
    return c / static_cast<double>(data.obs.size());
}

double pilot_censoring_rate(const StudyDesign& d, double censor_upper, int n_draws) {
    StudyDesign pd = d;
    pd.censor_upper = censor_upper;
    pd.n = n_draws;
    Dataset data = gen_dataset(pd, 911);
    return censoring_rate(data);
}

std::vector<double> imse_grid() {
    std::vector<double> g(100);
    for (int i = 0; i < 100; ++i) g[i] = 2.0 * i / 99.0;
    return g;
}

double compute_imse(std::span<const double> est, std::span<const double> truth) {
    if (est.size() != truth.size() || est.empty())
        throw std::invalid_argument("IMSE grids differ in length");
    double acc = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        double dd = est[i] - truth[i];
        acc += dd * dd;
    }
    return acc / static_cast<double>(est.size());
}

namespace {

struct RepOutcome {
    bool failed = true;
    std::string error;
    double censoring = 0;
    std::vector<double> coef_est, coef_se;
    std::vector<int> coef_cover;
    std::vector<double> curve_imse;
    std::unique_ptr<PipelineResult> full;
};

}  // namespace

StudyMetrics run_study(const StudyDesign& d, const ModelConfig& cfg, int reps,
                       int workers, const RepCallback& per_rep) {
    if (reps <= 0) throw std::invalid_argument("reps must be positive");

    // coefficient slots: free betas under the configured constraints
    std::vector<Constraint> constraints =
        cfg.constraints ? *cfg.constraints : default_constraints(cfg.model);
    std::vector<bool> beta_free(d.d1(), true);
    for (const auto& c : constraints)
        if (std::holds_alternative<FixBeta>(c)) {
            int k = std::get<FixBeta>(c).index;
            if (k >= 0 && k < d.d1()) beta_free[k] = false;
        }
    std::vector<int> coef_beta_k;
    for (int k = 0; k < d.d1(); ++k)
        if (beta_free[k]) coef_beta_k.push_back(k);

    const bool model_has_gamma = cfg.model != ModelClass::Aft;
    const bool model_has_eta =
        (cfg.model == ModelClass::CoxTv || cfg.model == ModelClass::Flex) && d.d2() > 0;
    const bool model_has_g = cfg.model == ModelClass::Aft || cfg.model == ModelClass::Ltm ||
                             cfg.model == ModelClass::Flex;
    // with g(0) pinned at zero the pair (alpha, q) is reported in the
    // normalization q(0) = 1, so truths get rescaled by c = q_truth(0)
    bool g_left_pinned = false;
    for (const auto& c : constraints)
        if (std::holds_alternative<FixSplineLeft>(c) &&
            std::get<FixSplineLeft>(c).target == SplineTarget::G)
            g_left_pinned = true;
    const double cnorm = (model_has_g && g_left_pinned) ? d.q(0.0) : 1.0;

    std::vector<std::string> curve_names;
    if (model_has_gamma) curve_names.push_back("alpha");
    if (model_has_eta) curve_names.push_back("eta:x5");
    if (model_has_g) curve_names.push_back("q");

    const auto grid = imse_grid();
    std::vector<double> truth_alpha(grid.size()), truth_eta(grid.size()),
        truth_q(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        truth_alpha[i] = cnorm * d.alpha(grid[i]);
        truth_eta[i] = d.eta(grid[i]);
        truth_q[i] = d.q(grid[i]) / cnorm;
    }

    std::vector<RepOutcome> outcomes(reps);
    parallel_chunks(reps, resolve_workers(workers), [&](int begin, int end) {
        for (int rep = begin; rep < end; ++rep) {
            RepOutcome& out = outcomes[rep];
            try {
                Dataset data = gen_dataset(d, rep);
                PipelineResult res = run_fit_pipeline(data, cfg, 1);
                // accept near-stationary fits: once the predicted decrease
                // |g|^2 sinks under the integration noise of the objective
                // the line search cannot certify progress, yet the implied
                // parameter displacement is far below Monte Carlo noise.
                // discarding such replicates would bias the study; the bar
                // matches the warm-start acceptance in the fit pipeline
                if (!res.fit.converged && res.fit.grad_norm > 1e-3) {
                    out.error = "fit did not converge";
                    continue;
                }
                out.censoring = censoring_rate(data);
                for (int k : coef_beta_k) {
                    int idx = res.layout.beta_idx[k];
                    double est = res.fit.theta_hat.beta[k];
                    out.coef_est.push_back(est);
                    out.coef_se.push_back(res.se[idx]);
                    out.coef_cover.push_back(res.ci_lo[idx] <= d.beta[k] &&
                                                     d.beta[k] <= res.ci_hi[idx]
                                                 ? 1
                                                 : 0);
                }
                std::vector<double> est(grid.size());
                if (model_has_gamma) {
                    auto gam = gamma_spline(res.spec, res.fit.theta_hat);
                    for (std::size_t i = 0; i < grid.size(); ++i)
                        est[i] = std::exp(gam.value(grid[i]));
                    out.curve_imse.push_back(compute_imse(est, truth_alpha));
                }
                if (model_has_eta) {
                    auto et = eta_spline(res.spec, res.fit.theta_hat, 0);
                    for (std::size_t i = 0; i < grid.size(); ++i)
                        est[i] = et.value(grid[i]);
                    out.curve_imse.push_back(compute_imse(est, truth_eta));
                }
                if (model_has_g) {
                    auto gs = g_spline(res.spec, res.fit.theta_hat);
                    for (std::size_t i = 0; i < grid.size(); ++i)
                        est[i] = std::exp(gs.value(grid[i]));
                    out.curve_imse.push_back(compute_imse(est, truth_q));
                }
                if (per_rep) out.full = std::make_unique<PipelineResult>(std::move(res));
                out.failed = false;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    });

    StudyMetrics m;
    m.design = d.name;
    m.model = to_string(cfg.model);
    m.n = d.n;
    m.reps_requested = reps;
    for (const auto& o : outcomes) {
        if (o.failed)
            ++m.failures;
        else
            ++m.reps_done;
    }
    if (m.failures * 5 > reps)
        throw StudyError("more than 20% of replicates failed (" +
                         std::to_string(m.failures) + "/" + std::to_string(reps) +
                         "); first error: " +
                         [&] {
                             for (const auto& o : outcomes)
                                 if (o.failed) return o.error;
                             return std::string();
                         }());

    const int done = m.reps_done;
    if (done == 0) throw StudyError("no replicate finished");

    m.coefs.resize(coef_beta_k.size());
    for (std::size_t ci = 0; ci < coef_beta_k.size(); ++ci) {
        CoefMetric& cm = m.coefs[ci];
        cm.name = "beta:" + std::string("x") + std::to_string(coef_beta_k[ci] + 1);
        cm.truth = d.beta[coef_beta_k[ci]];
        double sum = 0;
        std::vector<double> ests;
        double se_sum = 0;
        int cover = 0;
        for (const auto& o : outcomes) {
            if (o.failed) continue;
            ests.push_back(o.coef_est[ci]);
            se_sum += o.coef_se[ci];
            cover += o.coef_cover[ci];
        }
        for (double e : ests) sum += e;
        cm.mean_est = sum / done;
        cm.bias = cm.mean_est - cm.truth;
        double ss = 0;
        for (double e : ests) ss += (e - cm.mean_est) * (e - cm.mean_est);
        cm.emp_sd = done > 1 ? std::sqrt(ss / (done - 1)) : 0.0;
        cm.mean_se = se_sum / done;
        cm.coverage = static_cast<double>(cover) / done;
    }

    m.curves.resize(curve_names.size());
    for (std::size_t ci = 0; ci < curve_names.size(); ++ci) {
        CurveMetric& cm = m.curves[ci];
        cm.name = curve_names[ci];
        double sum = 0;
        std::vector<double> vals;
        for (const auto& o : outcomes) {
            if (o.failed) continue;
            vals.push_back(o.curve_imse[ci]);
            sum += o.curve_imse[ci];
        }
        cm.imse_mean = sum / done;
        double ss = 0;
        for (double v : vals) ss += (v - cm.imse_mean) * (v - cm.imse_mean);
        cm.imse_sd = done > 1 ? std::sqrt(ss / (done - 1)) : 0.0;
    }

    double cens = 0;
    for (const auto& o : outcomes)
        if (!o.failed) cens += o.censoring;
    m.mean_censoring = cens / done;

    if (per_rep) {
        for (int rep = 0; rep < reps; ++rep) {
            if (outcomes[rep].failed || !outcomes[rep].full) continue;
            Dataset data = gen_dataset(d, rep);
            per_rep(rep, data, *outcomes[rep].full);
        }
    }
    return m;
}

}  // namespace odesurv
