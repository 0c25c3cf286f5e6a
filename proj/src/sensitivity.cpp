#include "odesurv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odesurv {

GradientMode resolve_gradient_mode(const ModelSpec& spec, const ParamLayout& lay) {
    if (spec.gradient_mode != GradientMode::Auto) return spec.gradient_mode;
    // Without g the hazard has no state feedback and the forward system is
    // cheap; with g the adjoint wins once the parameter count grows.
    if (!spec.has_g() || lay.n_free <= 25) return GradientMode::Forward;
    return GradientMode::Adjoint;
}

SensitivityResult forward_grad(HazardEvaluator& ev, double y,
                               const ode::SolverOptions& opts) {
    const int P = ev.layout().n_free;
    SensitivityResult out;
    out.grad.assign(P, 0.0);
    if (y == 0) return out;
    if (!(y > 0)) throw std::invalid_argument("sensitivity needs y >= 0");

    const int dim = 1 + P;
    auto rhs = [&ev, P](double t, const double* u, double* du) {
        auto e = ev.eval(t, u[0]);
        du[0] = e.f;
        for (int i = 0; i < P; ++i) du[1 + i] = e.df_dlam * u[1 + i];
        ev.add_dpsi(e.f, du + 1);
    };
    std::vector<double> u0(dim, 0.0), uT(dim, 0.0);
    ode::integrate(dim, rhs, 0.0, u0, y, uT, opts);
    out.lam_y = uT[0];
    std::copy(uT.begin() + 1, uT.end(), out.grad.begin());
    return out;
}

SensitivityResult adjoint_grad(HazardEvaluator& ev, double y,
                               const ode::SolverOptions& opts) {
    const int P = ev.layout().n_free;
    SensitivityResult out;
    out.grad.assign(P, 0.0);
    if (y == 0) return out;
    if (!(y > 0)) throw std::invalid_argument("sensitivity needs y >= 0");

    ode::IvpProblem fwd;
    fwd.rhs = [&ev](double t, double u) { return ev.eval(t, u).f; };
    fwd.t0 = 0;
    fwd.y0 = 0;
    fwd.t_end = y;
    ode::DenseSolution lam = ode::solve_dense(fwd, opts);
    out.lam_y = lam.terminal();

    // Backward sweep in s = y - t: kappa' = +kappa f_lam, F2' = +kappa f_theta.
    const int dim = 1 + P;
    auto rhs = [&ev, &lam, y, P](double s, const double* u, double* du) {
        double t = std::clamp(y - s, 0.0, y);
        auto e = ev.eval(t, lam.eval(t));
        du[0] = u[0] * e.df_dlam;
        for (int i = 0; i < P; ++i) du[1 + i] = 0.0;
        ev.add_dpsi(u[0] * e.f, du + 1);
    };
    std::vector<double> u0(dim, 0.0), uT(dim, 0.0);
    u0[0] = 1.0;
    ode::integrate(dim, rhs, 0.0, u0, y, uT, opts);
    std::copy(uT.begin() + 1, uT.end(), out.grad.begin());
    return out;
}

SensitivityResult hazard_gradient(HazardEvaluator& ev, double y, GradientMode mode,
                                  const ode::SolverOptions& opts) {
    if (mode == GradientMode::Auto) mode = resolve_gradient_mode(ev.spec(), ev.layout());
    return mode == GradientMode::Adjoint ? adjoint_grad(ev, y, opts)
                                         : forward_grad(ev, y, opts);
}

SensitivityPath forward_grad_path(HazardEvaluator& ev, std::span<const double> grid,
                                  const ode::SolverOptions& opts) {
    const int P = ev.layout().n_free;
    SensitivityPath path;
    path.lam.assign(grid.size(), 0.0);
    path.grad.assign(grid.size(), std::vector<double>(P, 0.0));
    if (grid.empty()) return path;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        if (grid[i + 1] < grid[i])
            throw std::invalid_argument("sensitivity grid must be sorted");
    if (grid[0] < 0) throw std::invalid_argument("sensitivity grid must be nonnegative");

    const int dim = 1 + P;
    auto rhs = [&ev, P](double t, const double* u, double* du) {
        auto e = ev.eval(t, u[0]);
        du[0] = e.f;
        for (int i = 0; i < P; ++i) du[1 + i] = e.df_dlam * u[1 + i];
        ev.add_dpsi(e.f, du + 1);
    };
    std::vector<double> u(dim, 0.0);
    double t_cur = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] > t_cur) {
            std::vector<double> next(dim, 0.0);
            ode::integrate(dim, rhs, t_cur, u, grid[i], next, opts);
            u = std::move(next);
            t_cur = grid[i];
        }
        path.lam[i] = u[0];
        std::copy(u.begin() + 1, u.end(), path.grad[i].begin());
    }
    return path;
}

SensitivityResult forward_grad(const ModelSpec& spec, const ParamLayout& lay,
                               std::span<const double> flat, std::span<const double> x,
                               std::span<const double> z, double y,
                               const ode::SolverOptions& opts) {
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    return forward_grad(ev, y, opts);
}

SensitivityResult adjoint_grad(const ModelSpec& spec, const ParamLayout& lay,
                               std::span<const double> flat, std::span<const double> x,
                               std::span<const double> z, double y,
                               const ode::SolverOptions& opts) {
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    return adjoint_grad(ev, y, opts);
}

}  // namespace odesurv
