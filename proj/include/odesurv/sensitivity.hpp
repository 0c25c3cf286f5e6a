#pragma once

// Exact gradients of the subject-level cumulative hazard L(y) with respect
// to the free parameters, by ODE sensitivity analysis.
//
// Forward mode augments the state with F1 = dL/dtheta:
//     F1' = f_theta + f_lambda * F1,  F1(0) = 0,    grad = F1(y).
// Adjoint mode first solves L forward with dense output, then integrates
//     kappa' = -kappa * f_lambda,  F2' = -kappa * f_theta
// backward from (kappa, F2)(y) = (1, 0);  grad = F2(0).  Cost of the
// forward mode scales with the number of free parameters, the adjoint pays
// two scalar-sized sweeps plus the partial fills, so it wins for large
// parameter counts when g is present (without g the hazard does not feed
// back into itself and forward is already cheap).

#include <span>
#include <vector>

#include "odesurv/model.hpp"
#include "odesurv/odesolve.hpp"

namespace odesurv {

struct SensitivityResult {
    double lam_y = 0;
    std::vector<double> grad;  // dL(y)/dtheta over free coordinates
};

// Mode resolution for GradientMode::Auto.
GradientMode resolve_gradient_mode(const ModelSpec& spec, const ParamLayout& lay);

// Evaluator must have params set and the subject bound.
SensitivityResult forward_grad(HazardEvaluator& ev, double y,
                               const ode::SolverOptions& opts = {});
SensitivityResult adjoint_grad(HazardEvaluator& ev, double y,
                               const ode::SolverOptions& opts = {});
SensitivityResult hazard_gradient(HazardEvaluator& ev, double y, GradientMode mode,
                                  const ode::SolverOptions& opts = {});

// One forward pass recording (L, dL/dtheta) at each point of a sorted
// nonnegative grid; used for survival bands.
struct SensitivityPath {
    std::vector<double> lam;                // per grid point
    std::vector<std::vector<double>> grad;  // per grid point, n_free each
};

SensitivityPath forward_grad_path(HazardEvaluator& ev, std::span<const double> grid,
                                  const ode::SolverOptions& opts = {});

// Spec-shaped wrappers.
SensitivityResult forward_grad(const ModelSpec& spec, const ParamLayout& lay,
                               std::span<const double> flat, std::span<const double> x,
                               std::span<const double> z, double y,
                               const ode::SolverOptions& opts = {});
SensitivityResult adjoint_grad(const ModelSpec& spec, const ParamLayout& lay,
                               std::span<const double> flat, std::span<const double> x,
                               std::span<const double> z, double y,
                               const ode::SolverOptions& opts = {});

}  // namespace odesurv
