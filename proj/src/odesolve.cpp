#include "odesurv/odesolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace odesurv::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
// 5th-order weights double as the a7* row (FSAL).
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat, for the embedded error estimate.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output weights.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafe = 0.9, kFac1 = 0.2, kFac2 = 10.0, kBeta = 0.04;
constexpr double kExpo1 = 0.2 - kBeta * 0.75;

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

struct Stepper {
    int n;
    const RhsFn& rhs;
    const SolverOptions& opts;
    std::vector<double> y, k1, k2, k3, k4, k5, k6, k7, ytmp, ynew, rcont;

    Stepper(int dim, const RhsFn& f, const SolverOptions& o)
        : n(dim), rhs(f), opts(o) {
        for (auto* v : {&y, &k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp, &ynew})
            v->resize(n);
    }

    void eval(double t, const std::vector<double>& yy, std::vector<double>& out) {
        rhs(t, yy.data(), out.data());
        if (!all_finite(out))
            throw OdeError(OdeError::Kind::NonFiniteRhs,
                           "non-finite right-hand side at t = " + std::to_string(t));
    }

    // Candidate initial step following the usual two-trial heuristic.
    double initial_step(double t, double t_end) {
        double dnf = 0, dny = 0;
        for (int i = 0; i < n; ++i) {
            double sk = opts.abs_tol + opts.rel_tol * std::abs(y[i]);
            dnf += (k1[i] / sk) * (k1[i] / sk);
            dny += (y[i] / sk) * (y[i] / sk);
        }
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6
                                                  : std::sqrt(dny / dnf) * 0.01;
        h = std::min(h, t_end - t);
        // explicit Euler trial, then bound by the second-derivative scale
        for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * k1[i];
        eval(t + h, ytmp, k2);
        double der2 = 0;
        for (int i = 0; i < n; ++i) {
            double sk = opts.abs_tol + opts.rel_tol * std::abs(y[i]);
            double d = (k2[i] - k1[i]) / sk;
            der2 += d * d;
        }
        der2 = std::sqrt(der2) / h;
        double der12 = std::max(der2, std::sqrt(dnf));
        double h1 = (der12 <= 1e-15) ? std::max(1e-6, h * 1e-3)
                                     : std::pow(0.01 / der12, 0.2);
        return std::min({100.0 * h, h1, t_end - t});
    }
};

}  // namespace

void integrate(int dim, const RhsFn& rhs, double t0, std::span<const double> y0,
               double t_end, std::span<double> y_out, const SolverOptions& opts,
               const StepCallback& cb, bool dense) {
    if (dim < 1) throw OdeError(OdeError::Kind::BadArgument, "dimension must be >= 1");
    if (!(t_end >= t0))
        throw OdeError(OdeError::Kind::BadArgument, "t_end must be >= t0");
    if (static_cast<int>(y0.size()) != dim || static_cast<int>(y_out.size()) != dim)
        throw OdeError(OdeError::Kind::BadArgument, "state size mismatch");

    std::copy(y0.begin(), y0.end(), y_out.begin());
    if (t_end == t0) return;

    Stepper st(dim, rhs, opts);
    std::copy(y0.begin(), y0.end(), st.y.begin());
    if (dense) st.rcont.resize(5 * static_cast<std::size_t>(dim));

    double t = t0;
    st.eval(t, st.y, st.k1);
    double h = opts.initial_step > 0 ? std::min(opts.initial_step, t_end - t0)
                                     : st.initial_step(t, t_end);
    double facold = 1e-4;
    const double hmin_scale = 16.0 * std::numeric_limits<double>::epsilon();

    for (int step = 0; step < opts.max_steps; ++step) {
        if (h < hmin_scale * std::max(std::abs(t), 1.0))
            throw OdeError(OdeError::Kind::StepUnderflow,
                           "step size underflow at t = " + std::to_string(t));
        bool last = false;
        if (t + h >= t_end) {
            h = t_end - t;
            last = true;
        }

        auto& y = st.y;
        auto& k1 = st.k1;
        for (int i = 0; i < dim; ++i) st.ytmp[i] = y[i] + h * a21 * k1[i];
        st.eval(t + c2 * h, st.ytmp, st.k2);
        for (int i = 0; i < dim; ++i)
            st.ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * st.k2[i]);
        st.eval(t + c3 * h, st.ytmp, st.k3);
        for (int i = 0; i < dim; ++i)
            st.ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * st.k2[i] + a43 * st.k3[i]);
        st.eval(t + c4 * h, st.ytmp, st.k4);
        for (int i = 0; i < dim; ++i)
            st.ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * st.k2[i] + a53 * st.k3[i] +
                                     a54 * st.k4[i]);
        st.eval(t + c5 * h, st.ytmp, st.k5);
        for (int i = 0; i < dim; ++i)
            st.ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * st.k2[i] + a63 * st.k3[i] +
                                     a64 * st.k4[i] + a65 * st.k5[i]);
        st.eval(t + h, st.ytmp, st.k6);
        for (int i = 0; i < dim; ++i)
            st.ynew[i] = y[i] + h * (b1 * k1[i] + b3 * st.k3[i] + b4 * st.k4[i] +
                                     b5 * st.k5[i] + b6 * st.k6[i]);
        st.eval(t + h, st.ynew, st.k7);

        double err = 0;
        for (int i = 0; i < dim; ++i) {
            double sk = opts.abs_tol +
                        opts.rel_tol * std::max(std::abs(y[i]), std::abs(st.ynew[i]));
            double e = h * (e1 * k1[i] + e3 * st.k3[i] + e4 * st.k4[i] +
                            e5 * st.k5[i] + e6 * st.k6[i] + e7 * st.k7[i]);
            err += (e / sk) * (e / sk);
        }
        err = std::sqrt(err / dim);
        if (!std::isfinite(err))
            throw OdeError(OdeError::Kind::NonFiniteRhs,
                           "non-finite error estimate at t = " + std::to_string(t));

        double fac11 = std::pow(err, kExpo1);
        double fac = fac11 / std::pow(facold, kBeta);  // PI / Lund stabilization
        fac = std::max(1.0 / kFac2, std::min(1.0 / kFac1, fac / kSafe));
        double hnew = h / fac;

        if (err <= 1.0) {
            facold = std::max(err, 1e-4);
            if (dense || cb) {
                if (dense) {
                    for (int i = 0; i < dim; ++i) {
                        double ydiff = st.ynew[i] - y[i];
                        double bspl = h * k1[i] - ydiff;
                        st.rcont[i] = y[i];
                        st.rcont[dim + i] = ydiff;
                        st.rcont[2 * dim + i] = bspl;
                        st.rcont[3 * dim + i] = ydiff - h * st.k7[i] - bspl;
                        st.rcont[4 * dim + i] =
                            h * (d1 * k1[i] + d3 * st.k3[i] + d4 * st.k4[i] +
                                 d5 * st.k5[i] + d6 * st.k6[i] + d7 * st.k7[i]);
                    }
                }
                if (cb) {
                    StepInfo info;
                    info.t_old = t;
                    info.h = h;
                    info.y_old = std::span<const double>(y.data(), dim);
                    info.y_new = std::span<const double>(st.ynew.data(), dim);
                    info.k_old = std::span<const double>(k1.data(), dim);
                    if (dense)
                        info.rcont = std::span<const double>(st.rcont.data(), 5 * dim);
                    if (!cb(info)) {
                        std::copy(st.ynew.begin(), st.ynew.end(), y_out.begin());
                        return;
                    }
                }
            }
            t += h;
            std::swap(st.y, st.ynew);
            std::swap(st.k1, st.k7);  // FSAL
            if (last || t >= t_end) {
                std::copy(st.y.begin(), st.y.end(), y_out.begin());
                return;
            }
            h = hnew;
        } else {
            hnew = h / std::min(1.0 / kFac1, fac11 / kSafe);
            h = hnew;
        }
    }
    throw OdeError(OdeError::Kind::MaxStepsExceeded,
                   "step budget exhausted at t = " + std::to_string(t));
}

double dense_eval(std::span<const double> rcont, int dim, int i, double theta) {
    const double c1v = rcont[i];
    const double c2v = rcont[dim + i];
    const double c3v = rcont[2 * dim + i];
    const double c4v = rcont[3 * dim + i];
    const double c5v = rcont[4 * dim + i];
    const double th1 = 1.0 - theta;
    return c1v + theta * (c2v + th1 * (c3v + theta * (c4v + th1 * c5v)));
}

double solve_ivp(const IvpProblem& p, const SolverOptions& opts) {
    auto rhs = [&p](double t, const double* y, double* dydt) { dydt[0] = p.rhs(t, y[0]); };
    double y0 = p.y0, out = 0;
    integrate(1, rhs, p.t0, std::span<const double>(&y0, 1), p.t_end,
              std::span<double>(&out, 1), opts);
    return out;
}

DenseSolution solve_dense(const IvpProblem& p, const SolverOptions& opts) {
    DenseSolution sol;
    sol.t0_ = p.t0;
    sol.tend_ = p.t_end;
    sol.y0_ = p.y0;
    sol.yterm_ = p.y0;
    if (p.t_end == p.t0) return sol;
    auto rhs = [&p](double t, const double* y, double* dydt) { dydt[0] = p.rhs(t, y[0]); };
    auto cb = [&sol](const StepInfo& info) {
        sol.left_.push_back(info.t_old);
        sol.h_.push_back(info.h);
        sol.rcont_.push_back({info.rcont[0], info.rcont[1], info.rcont[2],
                              info.rcont[3], info.rcont[4]});
        return true;
    };
    double y0 = p.y0, out = 0;
    integrate(1, rhs, p.t0, std::span<const double>(&y0, 1), p.t_end,
              std::span<double>(&out, 1), opts, cb, true);
    sol.yterm_ = out;
    return sol;
}

double DenseSolution::eval(double t) const {
    const double slack = 1e-9 * (1.0 + std::abs(tend_ - t0_));
    if (t < t0_ - slack || t > tend_ + slack)
        throw OdeError(OdeError::Kind::BadArgument,
                       "dense solution evaluated outside its interval");
    if (left_.empty() || t <= t0_) return y0_;
    if (t >= tend_) return yterm_;
    // last segment with left <= t
    auto it = std::upper_bound(left_.begin(), left_.end(), t);
    std::size_t seg = static_cast<std::size_t>(it - left_.begin());
    seg = seg > 0 ? seg - 1 : 0;
    double theta = (t - left_[seg]) / h_[seg];
    theta = std::clamp(theta, 0.0, 1.0);
    return dense_eval(std::span<const double>(rcont_[seg].data(), 5), 1, 0, theta);
}

std::optional<double> first_passage_time(const IvpProblem& p, double threshold,
                                         const SolverOptions& opts) {
    if (!(threshold > p.y0))
        throw OdeError(OdeError::Kind::BadArgument, "threshold must exceed y0");
    auto rhs = [&p](double t, const double* y, double* dydt) {
        double f = p.rhs(t, y[0]);
        if (f < 0.0)
            throw OdeError(OdeError::Kind::NonMonotone,
                           "negative rhs in a first-passage solve (t = " +
                               std::to_string(t) + ")");
        dydt[0] = f;
    };
    std::optional<double> hit;
    auto cb = [&](const StepInfo& info) {
        if (info.y_new[0] < threshold) return true;
        // crossing inside this step: bisect the interpolant
        double lo = 0.0, hi = 1.0;
        auto val = [&](double th) { return dense_eval(info.rcont, 1, 0, th); };
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            double v = val(mid);
            if (std::abs(v - threshold) <= opts.abs_tol) {
                lo = hi = mid;
                break;
            }
            if (v < threshold)
                lo = mid;
            else
                hi = mid;
            if (hi - lo < 1e-15) break;
        }
        hit = info.t_old + 0.5 * (lo + hi) * info.h;
        return false;
    };
    double y0 = p.y0, out = 0;
    integrate(1, rhs, p.t0, std::span<const double>(&y0, 1), p.t_end,
              std::span<double>(&out, 1), opts, cb, true);
    return hit;
}

}  // namespace odesurv::ode
