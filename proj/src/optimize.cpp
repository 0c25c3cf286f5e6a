#include "odesurv/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "odesurv/parallel.hpp"

namespace odesurv {

namespace {

double inf_norm(std::span<const double> v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Maximizes the mean log-likelihood; works on the negated objective.
struct Objective {
    const Dataset& data;
    const ModelSpec& spec;
    const ParamLayout& lay;
    EvalOptions eopts;
    int evals = 0;

    // Returns false when the point is infeasible (exponent overflow or a
    // diverging trial solve); the line search then shrinks.
    bool eval(const std::vector<double>& x, double& f, std::vector<double>& g) {
        ++evals;
        try {
            LoglikResult r = loglik(data, spec, lay, x, eopts);
            f = -r.value;
            g.resize(r.grad.size());
            // near-divergent trajectories produce finite values with
            // astronomic derivatives; the stationary point inside such a
            // region cannot be resolved in double precision, so treat these
            // points like overflow and let the line search retreat
            const double kGradCap = 1e6;
            for (std::size_t i = 0; i < r.grad.size(); ++i) {
                if (!std::isfinite(r.grad[i]) || std::abs(r.grad[i]) > kGradCap)
                    return false;
                g[i] = -r.grad[i];
            }
            return std::isfinite(f);
        } catch (const LoglikError&) {
            return false;
        } catch (const OverflowError&) {
            return false;
        } catch (const ode::OdeError&) {
            return false;
        }
    }
};

struct LbfgsMemory {
    std::deque<std::vector<double>> s, y;
    std::deque<double> rho;
    int cap;

    explicit LbfgsMemory(int m) : cap(m) {}

    void push(std::vector<double> si, std::vector<double> yi) {
        double sy = dot(si, yi);
        if (!(sy > 1e-10 * inf_norm(si) * inf_norm(yi)) || !(sy > 0)) return;
        s.push_back(std::move(si));
        y.push_back(std::move(yi));
        rho.push_back(1.0 / sy);
        if (static_cast<int>(s.size()) > cap) {
            s.pop_front();
            y.pop_front();
            rho.pop_front();
        }
    }

    void clear() {
        s.clear();
        y.clear();
        rho.clear();
    }

    // Two-loop recursion: d = -H g.
    std::vector<double> direction(const std::vector<double>& g) const {
        std::vector<double> q = g;
        const int m = static_cast<int>(s.size());
        std::vector<double> alpha(m, 0.0);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho[i] * dot(s[i], q);
            for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * y[i][j];
        }
        if (m > 0) {
            double gamma = dot(s[m - 1], y[m - 1]) / dot(y[m - 1], y[m - 1]);
            for (double& v : q) v *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            double beta = rho[i] * dot(y[i], q);
            for (std::size_t j = 0; j < q.size(); ++j) q[j] += (alpha[i] - beta) * s[i][j];
        }
        for (double& v : q) v = -v;
        return q;
    }
};

}  // namespace

InitResult initialize(const Dataset& data, const ModelSpec& spec, const FitOptions& opts) {
    ParamLayout lay = make_layout(spec, data.d1(), data.x_names, data.z_names);
    InitResult out;
    out.flat.assign(lay.n_free, 0.0);
    if (!spec.has_g()) return out;

    // Proportional-hazards reduction: drop g (and its constraint).  A spec
    // with no time basis still needs one here to carry the baseline, so a
    // gamma spline is activated just for the warm start; its coefficients
    // are discarded afterwards.
    ModelSpec red = spec;
    red.g_knots.reset();
    red.constraints.clear();
    for (const auto& c : spec.constraints)
        if (std::holds_alternative<FixBeta>(c)) red.constraints.push_back(c);
        else {
            const auto& fs = std::get<FixSplineLeft>(c);
            if (fs.target != SplineTarget::G) red.constraints.push_back(c);
        }
    bool borrowed_gamma = false;
    if (!red.has_time_basis()) {
        const auto& gk = *spec.g_knots;
        auto events = data.event_times();
        double tmax = data.max_time();
        if (tmax <= 0) tmax = 1.0;
        red.time_knots = KnotVector::quantile(
            0.0, tmax, static_cast<int>(gk.interior().size()), gk.order(), events);
        red.gamma_active = true;
        borrowed_gamma = true;
    }

    FitOptions ropts = opts;
    ropts.init = InitMode::Zeros;
    ropts.user_init.clear();

    double lam_max = 0;
    Parameters warm;
    bool ok = true;
    try {
        FitResult rfit = fit(data, red, ropts);
        ok = rfit.converged || rfit.grad_norm < 1e-3;
        warm = rfit.theta_hat;
        if (ok) {
            ParamLayout rlay = make_layout(red, data.d1(), data.x_names, data.z_names);
            EvalOptions eo;
            eo.ode = opts.ode;
            eo.workers = opts.workers;
            std::vector<double> lams(data.n(), 0.0);
            parallel_chunks(data.n(), resolve_workers(opts.workers), [&](int b, int e) {
                HazardEvaluator ev(red, rlay);
                ev.set_params(rfit.flat_hat);
                for (int i = b; i < e; ++i) {
                    ev.bind(data.obs[i]);
                    ode::IvpProblem p;
                    p.rhs = [&ev](double t, double u) { return ev.eval(t, u).f; };
                    p.t_end = data.obs[i].y;
                    lams[i] = p.t_end > 0 ? ode::solve_ivp(p, opts.ode) : 0.0;
                }
            });
            lam_max = *std::max_element(lams.begin(), lams.end());
            out.lam_values = lams;
        }
    } catch (const std::exception&) {
        ok = false;
    }

    if (!ok || !(lam_max > 0)) {
        // zero parameters make the hazard exp(0), so L(Y) = Y
        out.fallback = true;
        out.lam_max = std::max(data.max_time(), 1e-8);
        out.lam_values.clear();
        return out;
    }

    Parameters p0;
    p0.beta = warm.beta;
    p0.a.assign(lay.d2 + 1, std::vector<double>(lay.q1, 0.0));
    bool kept_time = false;
    if (!borrowed_gamma && lay.q1 > 0) {
        if (spec.gamma_active) p0.a[0] = warm.a[0];
        for (int l = 0; l < lay.d2; ++l)
            if (spec.eta_active[l]) p0.a[1 + l] = warm.a[1 + l];
        kept_time = true;
    }
    p0.b.assign(lay.q2, 0.0);

    // When the time basis is dropped (it only existed for the warm start),
    // the transferred start realizes hazards exp(x'beta) whose cumulative
    // values can overshoot the g domain by orders of magnitude and push the
    // first iterations deep into extrapolation blow-up territory.  If the
    // left end of g is not pinned, soak the mismatch into g's free
    // intercept: a constant coefficient vector shifts log-hazard uniformly.
    if (!kept_time) {
        bool g_left_pinned = false;
        for (const auto& c : spec.constraints)
            if (std::holds_alternative<FixSplineLeft>(c) &&
                std::get<FixSplineLeft>(c).target == SplineTarget::G)
                g_left_pinned = true;
        if (!g_left_pinned) {
            double m0 = 0;
            for (int i = 0; i < data.n(); ++i) {
                double xb = 0;
                for (std::size_t k = 0; k < p0.beta.size(); ++k)
                    xb += p0.beta[k] * data.obs[i].x[k];
                m0 = std::max(m0, std::exp(xb) * data.obs[i].y);
            }
            const double headroom = 0.5 * lam_max;
            if (m0 > headroom) {
                const double shift = std::log(headroom / m0);
                p0.b.assign(lay.q2, shift);
            }
        }
    }
    out.flat = lay.pack(p0);
    out.lam_max = lam_max;
    return out;
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opts) {
    data.validate();
    if (data.n_events() == 0) throw DataError("no events in the data");
    ParamLayout lay = make_layout(spec, data.d1(), data.x_names, data.z_names);
    const int P = lay.n_free;

    FitResult res;
    std::vector<double> x(P, 0.0);
    switch (opts.init) {
        case InitMode::Zeros:
            break;
        case InitMode::User:
            if (static_cast<int>(opts.user_init.size()) != P)
                throw std::invalid_argument("user init has the wrong length");
            x = opts.user_init;
            break;
        case InitMode::CoxWarmStart: {
            InitResult ir = initialize(data, spec, opts);
            x = ir.flat;
            res.warm_start_fallback = ir.fallback;
            break;
        }
    }

    Objective obj{data, spec, lay, EvalOptions{opts.ode, opts.workers}, 0};
    double f = 0;
    std::vector<double> g;
    if (!obj.eval(x, f, g))
        throw std::invalid_argument("objective not evaluable at the starting point");

    LbfgsMemory mem(std::max(1, opts.history));
    const double c1 = 1e-4;
    bool converged = false;
    int iter = 0;
    int stall_resets = 0;

    for (; iter < opts.max_iters; ++iter) {
        if (inf_norm(g) <= opts.grad_tol) {
            converged = true;
            break;
        }
        std::vector<double> d = mem.direction(g);
        double gd = dot(g, d);
        if (!(gd < 0)) {  // defective direction, reset to steepest descent
            mem.clear();
            d = g;
            for (double& v : d) v = -v;
            gd = dot(g, d);
            if (!(gd < 0)) break;
        }
        // cap the trial displacement; exponents in the model make long jumps
        // land in overflow territory where every evaluation fails
        const double kMaxStep = 10.0;
        double dn = inf_norm(d);
        if (dn > kMaxStep) {
            double sc = kMaxStep / dn;
            for (double& v : d) v *= sc;
            gd *= sc;
        }

        double alpha = mem.s.empty() ? std::min(1.0, 1.0 / std::max(1e-12, inf_norm(g)))
                                     : 1.0;
        double fn = 0;
        std::vector<double> gn, xn(P);
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (int i = 0; i < P; ++i) xn[i] = x[i] + alpha * d[i];
            if (obj.eval(xn, fn, gn) && fn <= f + c1 * alpha * gd) {
                accepted = true;
                break;
            }
            // quadratic interpolation when the trial value is usable
            double shrink = 0.5;
            if (std::isfinite(fn)) {
                double denom = 2.0 * (fn - f - alpha * gd);
                if (denom > 0) {
                    double amin = -gd * alpha * alpha / denom;
                    shrink = std::clamp(amin / alpha, 0.1, 0.5);
                }
            }
            alpha *= shrink;
            if (alpha < 1e-16) break;
        }
        if (!accepted) {
            // stale curvature can produce directions that fail everywhere;
            // drop the memory and retry as steepest descent before giving up
            if (mem.s.empty()) break;
            mem.clear();
            continue;
        }

        std::vector<double> s(P), ydiff(P);
        for (int i = 0; i < P; ++i) {
            s[i] = xn[i] - x[i];
            ydiff[i] = gn[i] - g[i];
        }
        double step_norm = inf_norm(s);
        mem.push(std::move(s), std::move(ydiff));
        x.swap(xn);
        f = fn;
        g.swap(gn);
        if (step_norm < opts.step_tol) {
            // micro-steps usually mean the stored curvature pairs have gone
            // stale, not that the optimum is flat: drop the memory and let a
            // rescaled steepest-descent step rebuild it.  a bounded number of
            // resets keeps genuine plateaus from looping to max_iters
            if (stall_resets < 3) {
                ++stall_resets;
                mem.clear();
                continue;
            }
            ++iter;
            break;  // stalled; converged only if the gradient test also passes
        }
    }

    res.flat_hat = x;
    res.theta_hat = lay.unpack(x);
    res.loglik = -f;
    res.grad_norm = inf_norm(g);
    res.iters = iter;
    res.n_evals = obj.evals;
    res.converged = converged || inf_norm(g) <= opts.grad_tol;
    return res;
}

}  // namespace odesurv
