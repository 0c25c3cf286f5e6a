#pragma once

// Information-matrix inference for all free coordinates jointly: standard
// errors and Wald intervals from (n * I_hat)^{-1}, delta-method pointwise
// bands for the spline functions, and survival curves with bands.

#include <Eigen/Dense>
#include <span>
#include <stdexcept>
#include <vector>

#include "odesurv/likelihood.hpp"
#include "odesurv/model.hpp"

namespace odesurv {

enum class InfoEstimator { Opg, NumericHessian };

class SingularInfoError : public std::runtime_error {
public:
    SingularInfoError(const std::string& m, double cond)
        : std::runtime_error(m), condition(cond) {}
    double condition;
};

// Opg: (1/n) sum s_i s_i'.  NumericHessian: minus the central-difference
// Jacobian of the exact mean-loglik gradient, symmetrized.
Eigen::MatrixXd information_matrix(const Dataset& data, const ModelSpec& spec,
                                   const ParamLayout& lay, std::span<const double> flat,
                                   const EvalOptions& opts, InfoEstimator est);

struct CovarianceResult {
    Eigen::MatrixXd cov;  // (n * info)^{-1}
    double condition = 0;
};

// Throws SingularInfoError (with the condition number) instead of silently
// pseudo-inverting.
CovarianceResult invert_information(const Eigen::MatrixXd& info, int n_obs);

std::vector<double> std_errors(const Eigen::MatrixXd& cov);

struct Interval {
    double lo = 0, hi = 0;
};
std::vector<Interval> wald_intervals(std::span<const double> est,
                                     std::span<const double> se, double level = 0.95);

struct Band {
    std::vector<double> est, lo, hi;
    std::vector<std::uint8_t> extrapolated;  // grid point outside the knot domain
};

// Pointwise delta-method band for gamma, eta_l or g along a grid.
Band pointwise_band(const ModelSpec& spec, const ParamLayout& lay, const Parameters& p,
                    const Eigen::MatrixXd& cov, SplineTarget which, int eta_index,
                    std::span<const double> grid, double level = 0.95);

// S(t) = exp(-L(t)) for one covariate profile along a sorted grid.
std::vector<double> survival_curve(const ModelSpec& spec, const ParamLayout& lay,
                                   std::span<const double> flat, std::span<const double> x,
                                   std::span<const double> z, std::span<const double> grid,
                                   const ode::SolverOptions& opts = {});

struct SurvivalBand {
    std::vector<double> surv, lo, hi;
};

// Delta-method band on the cumulative hazard mapped through exp(-u), so
// the band stays inside (0, 1] and respects monotonicity of the map.
SurvivalBand survival_band(const ModelSpec& spec, const ParamLayout& lay,
                           std::span<const double> flat, const Eigen::MatrixXd& cov,
                           std::span<const double> x, std::span<const double> z,
                           std::span<const double> grid, double level = 0.95,
                           const ode::SolverOptions& opts = {});

}  // namespace odesurv
