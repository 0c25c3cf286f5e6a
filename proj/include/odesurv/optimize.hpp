#pragma once

// Sieve maximum likelihood: L-BFGS ascent on the mean log-likelihood with
// an Armijo backtracking line search.  Equality constraints are eliminated
// beforehand by the flat parameterization, so this is unconstrained.

#include <span>
#include <vector>

#include "odesurv/likelihood.hpp"
#include "odesurv/model.hpp"

namespace odesurv {

enum class InitMode { Zeros, CoxWarmStart, User };

struct FitOptions {
    double grad_tol = 1e-6;   // sup-norm of the mean-loglik gradient
    double step_tol = 1e-10;  // sup-norm of the parameter step
    int max_iters = 500;
    int history = 10;  // L-BFGS memory
    InitMode init = InitMode::Zeros;
    std::vector<double> user_init;
    ode::SolverOptions ode;
    int workers = 1;
};

struct FitResult {
    Parameters theta_hat;
    std::vector<double> flat_hat;
    double loglik = 0;       // mean log-likelihood at the optimum
    double grad_norm = 0;    // sup-norm at the optimum
    int iters = 0;
    int n_evals = 0;
    bool converged = false;
    bool warm_start_fallback = false;
};

struct InitResult {
    std::vector<double> flat;
    double lam_max = 0;  // max fitted cumulative hazard at observed times
    std::vector<double> lam_values;  // fitted cumulative hazard at each observed time
    bool fallback = false;
};

// Proportional-hazards warm start.  For specs with g, fits the reduction
// without g (activating a gamma basis if the spec has none), transfers
// beta and any shared spline columns, reports the largest fitted
// cumulative hazard for placing the g knots.  Specs without g get zeros.
InitResult initialize(const Dataset& data, const ModelSpec& spec, const FitOptions& opts);

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opts = {});

}  // namespace odesurv
