#include "odesurv/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "odesurv/parallel.hpp"

namespace odesurv {

namespace {

// Acklam's inverse normal CDF (abs error ~1e-9, plenty for Wald limits).
double inv_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability out of (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p <= phigh) {
        q = p - 0.5;
        r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
}

double z_for_level(double level) { return inv_normal_cdf(0.5 + level / 2.0); }

}  // namespace

Eigen::MatrixXd information_matrix(const Dataset& data, const ModelSpec& spec,
                                   const ParamLayout& lay, std::span<const double> flat,
                                   const EvalOptions& opts, InfoEstimator est) {
    const int n = data.n();
    const int P = lay.n_free;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(P, P);

    if (est == InfoEstimator::Opg) {
        std::vector<double> rows = score_matrix(data, spec, lay, flat, opts);
        // serial ascending accumulation: deterministic regardless of how
        // the scores were produced
        for (int i = 0; i < n; ++i) {
            const double* s = rows.data() + static_cast<std::size_t>(i) * P;
            for (int j = 0; j < P; ++j)
                for (int k = j; k < P; ++k) info(j, k) += s[j] * s[k];
        }
        info /= static_cast<double>(n);
        for (int j = 0; j < P; ++j)
            for (int k = 0; k < j; ++k) info(j, k) = info(k, j);
        return info;
    }

    // numeric Hessian of the mean loglik from the exact gradient
    std::vector<double> theta(flat.begin(), flat.end());
    Eigen::MatrixXd H(P, P);
    for (int k = 0; k < P; ++k) {
        const double h = 1e-5 * (1.0 + std::abs(theta[k]));
        std::vector<double> tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        LoglikResult rp = loglik(data, spec, lay, tp, opts);
        LoglikResult rm = loglik(data, spec, lay, tm, opts);
        for (int j = 0; j < P; ++j) H(j, k) = (rp.grad[j] - rm.grad[j]) / (2.0 * h);
    }
    Eigen::MatrixXd sym = -0.5 * (H + H.transpose());
    return sym;
}

CovarianceResult invert_information(const Eigen::MatrixXd& info, int n_obs) {
    if (info.rows() != info.cols()) throw std::invalid_argument("information not square");
    const Eigen::MatrixXd scaled = static_cast<double>(n_obs) * info;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
    if (es.info() != Eigen::Success)
        throw SingularInfoError("eigendecomposition of the information failed", 0.0);
    const auto& ev = es.eigenvalues();
    const double lmin = ev.minCoeff(), lmax = ev.maxCoeff();
    const double cond = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    // the eigensolve keeps a couple of accurate digits in the inverse up to
    // condition ~1e14; past that some coordinate is effectively unidentified
    if (!(lmin > 0) || cond > 1e14)
        throw SingularInfoError(
            "information matrix numerically singular (condition " +
                std::to_string(cond) + "); consider fewer knots",
            cond);
    Eigen::VectorXd inv_ev = ev.cwiseInverse();
    CovarianceResult out;
    out.cov = es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
    out.condition = cond;
    return out;
}

std::vector<double> std_errors(const Eigen::MatrixXd& cov) {
    std::vector<double> se(cov.rows());
    for (int i = 0; i < cov.rows(); ++i) se[i] = std::sqrt(std::max(0.0, cov(i, i)));
    return se;
}

std::vector<Interval> wald_intervals(std::span<const double> est,
                                     std::span<const double> se, double level) {
    if (est.size() != se.size()) throw std::invalid_argument("est/se size mismatch");
    const double z = z_for_level(level);
    std::vector<Interval> out(est.size());
    for (std::size_t i = 0; i < est.size(); ++i)
        out[i] = {est[i] - z * se[i], est[i] + z * se[i]};
    return out;
}

Band pointwise_band(const ModelSpec& spec, const ParamLayout& lay, const Parameters& p,
                    const Eigen::MatrixXd& cov, SplineTarget which, int eta_index,
                    std::span<const double> grid, double level) {
    const KnotVector* kv = nullptr;
    const std::vector<double>* coeffs = nullptr;
    const std::vector<int>* idxs = nullptr;
    switch (which) {
        case SplineTarget::Gamma:
            if (!spec.gamma_active) throw std::invalid_argument("gamma not active");
            kv = &*spec.time_knots;
            coeffs = &p.a[0];
            idxs = &lay.a_idx[0];
            break;
        case SplineTarget::Eta:
            if (eta_index < 0 || eta_index >= spec.d2() || !spec.eta_active[eta_index])
                throw std::invalid_argument("eta column not active");
            kv = &*spec.time_knots;
            coeffs = &p.a[1 + eta_index];
            idxs = &lay.a_idx[1 + eta_index];
            break;
        case SplineTarget::G:
            if (!spec.has_g()) throw std::invalid_argument("g not active");
            kv = &*spec.g_knots;
            coeffs = &p.b;
            idxs = &lay.b_idx;
            break;
    }
    if (cov.rows() != lay.n_free || cov.cols() != lay.n_free)
        throw std::invalid_argument("covariance size does not match the layout");

    const double z = z_for_level(level);
    const int ord = kv->order();
    Band band;
    band.est.resize(grid.size());
    band.lo.resize(grid.size());
    band.hi.resize(grid.size());
    band.extrapolated.resize(grid.size());
    BasisScratch s;
    std::vector<double> w(ord);
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const double t = grid[gi];
        int first = eval_nonzero_ext(*kv, t, w.data(), s);
        double est = 0;
        for (int r = 0; r < ord; ++r) est += w[r] * (*coeffs)[first + r];
        double var = 0;
        for (int r = 0; r < ord; ++r) {
            int j = (*idxs)[first + r];
            if (j < 0) continue;
            for (int u = 0; u < ord; ++u) {
                int k = (*idxs)[first + u];
                if (k < 0) continue;
                var += w[r] * w[u] * cov(j, k);
            }
        }
        const double sd = std::sqrt(std::max(0.0, var));
        band.est[gi] = est;
        band.lo[gi] = est - z * sd;
        band.hi[gi] = est + z * sd;
        band.extrapolated[gi] = (t < kv->a() || t > kv->b()) ? 1 : 0;
    }
    return band;
}

std::vector<double> survival_curve(const ModelSpec& spec, const ParamLayout& lay,
                                   std::span<const double> flat, std::span<const double> x,
                                   std::span<const double> z, std::span<const double> grid,
                                   const ode::SolverOptions& opts) {
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        if (grid[i + 1] < grid[i]) throw std::invalid_argument("grid must be sorted");
    if (!grid.empty() && grid[0] < 0)
        throw std::invalid_argument("grid must be nonnegative");

    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    std::vector<double> out(grid.size(), 1.0);
    if (grid.empty()) return out;
    const double tmax = grid.back();
    if (tmax == 0) return out;
    ode::IvpProblem p;
    p.rhs = [&ev](double t, double u) { return ev.eval(t, u).f; };
    p.t_end = tmax;
    ode::DenseSolution lam = ode::solve_dense(p, opts);
    for (std::size_t i = 0; i < grid.size(); ++i)
        out[i] = std::exp(-lam.eval(grid[i]));
    return out;
}

SurvivalBand survival_band(const ModelSpec& spec, const ParamLayout& lay,
                           std::span<const double> flat, const Eigen::MatrixXd& cov,
                           std::span<const double> x, std::span<const double> z,
                           std::span<const double> grid, double level,
                           const ode::SolverOptions& opts) {
    if (cov.rows() != lay.n_free || cov.cols() != lay.n_free)
        throw std::invalid_argument("covariance size does not match the layout");
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    SensitivityPath path = forward_grad_path(ev, grid, opts);

    const double zc = z_for_level(level);
    const int P = lay.n_free;
    SurvivalBand out;
    out.surv.resize(grid.size());
    out.lo.resize(grid.size());
    out.hi.resize(grid.size());
    Eigen::VectorXd f1(P);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (int j = 0; j < P; ++j) f1(j) = path.grad[i][j];
        const double var = f1.dot(cov * f1);
        const double sd = std::sqrt(std::max(0.0, var));
        const double lamv = path.lam[i];
        out.surv[i] = std::exp(-lamv);
        out.lo[i] = std::exp(-(lamv + zc * sd));
        out.hi[i] = std::min(1.0, std::exp(-(lamv - zc * sd)));
    }
    return out;
}

}  // namespace odesurv
