#pragma once

// Mean log-likelihood of right-censored data under the hazard ODE and its
// exact gradient.  Per subject:
//
//     l_i = delta_i * psi(Y_i, L_i(Y_i)) - L_i(Y_i)
//     s_i = delta_i * (dpsi_direct + g'(L_i) dL_i) - dL_i
//
// with dL_i = dL_i(Y_i)/dtheta from sensitivity analysis.  Observations
// are mapped in parallel into per-index slots and reduced with the
// fixed-order pairwise tree, so value and gradient are bit-identical
// across worker counts.

#include <span>
#include <vector>

#include "odesurv/model.hpp"
#include "odesurv/odesolve.hpp"
#include "odesurv/sensitivity.hpp"

namespace odesurv {

struct EvalOptions {
    ode::SolverOptions ode;
    int workers = 1;  // 0 = hardware concurrency
};

class LoglikError : public std::runtime_error {
public:
    LoglikError(int index, const std::string& m)
        : std::runtime_error(m), obs_index(index) {}
    int obs_index;
};

double loglik_obs(const Observation& o, const ModelSpec& spec, const ParamLayout& lay,
                  std::span<const double> flat, const ode::SolverOptions& opts = {});

std::vector<double> score_obs(const Observation& o, const ModelSpec& spec,
                              const ParamLayout& lay, std::span<const double> flat,
                              const ode::SolverOptions& opts = {});

struct LoglikResult {
    double value = 0;
    std::vector<double> grad;
};

LoglikResult loglik(const Dataset& data, const ModelSpec& spec, const ParamLayout& lay,
                    std::span<const double> flat, const EvalOptions& opts = {});

// Value only (skips sensitivity solves).
double loglik_value(const Dataset& data, const ModelSpec& spec, const ParamLayout& lay,
                    std::span<const double> flat, const EvalOptions& opts = {});

// All n score vectors, row-major n x n_free; parallel map, no reduction.
std::vector<double> score_matrix(const Dataset& data, const ModelSpec& spec,
                                 const ParamLayout& lay, std::span<const double> flat,
                                 const EvalOptions& opts = {});

}  // namespace odesurv
