#pragma once

// Explicit Dormand-Prince 5(4) integrator with PI step-size control,
// continuous (dense) output and first-passage location.  The model layer
// only ever integrates forward in an increasing independent variable; the
// adjoint pass substitutes s = y - t so it also runs forward here.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace odesurv::ode {

struct SolverOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    int max_steps = 100000;
    double initial_step = 0.0;  // 0 = choose automatically
};

class OdeError : public std::runtime_error {
public:
    enum class Kind { StepUnderflow, MaxStepsExceeded, NonFiniteRhs, NonMonotone, BadArgument };
    OdeError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

// dydt must be filled for all dim components.
using RhsFn = std::function<void(double t, const double* y, double* dydt)>;

// Info handed to the per-step callback after each accepted step.  rcont is
// nonempty only when dense output was requested: 5 * dim interpolation
// coefficients laid out coefficient-major (c1[dim], c2[dim], ...).
struct StepInfo {
    double t_old = 0, h = 0;
    std::span<const double> y_old, y_new, k_old, rcont;
};

// Return false from the callback to stop integration at the current step.
using StepCallback = std::function<bool(const StepInfo&)>;

// Core integrator.  Integrates y' = rhs from (t0, y0) to t_end >= t0 and
// writes the terminal state to y_out (aliasing y0 is fine).  Throws
// OdeError on step underflow, step-count exhaustion or non-finite values.
void integrate(int dim, const RhsFn& rhs, double t0, std::span<const double> y0,
               double t_end, std::span<double> y_out, const SolverOptions& opts,
               const StepCallback& cb = nullptr, bool dense = false);

// Evaluate the degree-4 interpolant of one accepted step at fraction
// theta = (t - t_old) / h, for component i of dim.
double dense_eval(std::span<const double> rcont, int dim, int i, double theta);

// Scalar convenience problem.
struct IvpProblem {
    std::function<double(double t, double y)> rhs;
    double t0 = 0, y0 = 0, t_end = 0;
};

double solve_ivp(const IvpProblem& p, const SolverOptions& opts = {});

// Piecewise interpolant of a scalar solution, evaluable on [t0, t_end].
class DenseSolution {
public:
    double operator()(double t) const { return eval(t); }
    double eval(double t) const;  // clamps tiny overshoot, throws beyond that
    double t0() const { return t0_; }
    double t_end() const { return tend_; }
    double terminal() const { return yterm_; }

private:
    friend DenseSolution solve_dense(const IvpProblem&, const SolverOptions&);
    double t0_ = 0, tend_ = 0, y0_ = 0, yterm_ = 0;
    std::vector<double> left_, h_;             // per accepted step
    std::vector<std::array<double, 5>> rcont_;
};

DenseSolution solve_dense(const IvpProblem& p, const SolverOptions& opts = {});

// Smallest t in [t0, t_end] with y(t) = threshold for a nondecreasing
// solution (rhs >= 0 enforced; threshold > y0 required).  nullopt when the
// solution never reaches the threshold on the interval.  The crossing is
// located by bisection on the step interpolant to |y - threshold| <=
// abs_tol (or until the bracket collapses).
std::optional<double> first_passage_time(const IvpProblem& p, double threshold,
                                         const SolverOptions& opts = {});

}  // namespace odesurv::ode
