#pragma once

// Hazard-ODE model family.  The cumulative hazard of a subject with fixed
// covariates x and (optionally) time-interacted covariates z solves
//
//     L'(t) = exp(psi(t, L)),   L(0) = 0,
//     psi(t, u) = x'beta + gamma(t) + sum_l eta_l(t) z_l + g(u),
//
// where gamma and the eta_l share one spline basis over time and g has its
// own basis over cumulative-hazard values.  Switching parts of psi off
// recovers the classical special cases: no g -> proportional hazards
// (time-varying Cox), no time basis -> AFT, both -> the flexible class.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "odesurv/odesolve.hpp"
#include "odesurv/splines.hpp"

namespace odesurv {

struct Observation {
    double y = 0;               // follow-up time
    int delta = 0;              // 1 = event, 0 = right-censored
    std::vector<double> x;      // proportional covariates (may be empty)
    std::vector<double> z;      // time-interacted covariates (may be empty)
};

struct Dataset {
    std::vector<Observation> obs;
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;

    int n() const { return static_cast<int>(obs.size()); }
    int d1() const { return static_cast<int>(x_names.size()); }
    int d2() const { return static_cast<int>(z_names.size()); }
    int n_events() const;
    double max_time() const;
    std::vector<double> event_times() const;
    void validate() const;  // throws DataError
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// exp argument guard tripped (|psi| > 700); surfaces through fitting as a
// rejected line-search step.
class OverflowError : public std::runtime_error {
public:
    explicit OverflowError(const std::string& m) : std::runtime_error(m) {}
};

enum class GradientMode { Auto, Forward, Adjoint };

enum class SplineTarget { Gamma, Eta, G };

struct FixBeta {
    int index = 0;  // 0-based into x
    double value = 0;
};

// Pins the left-boundary value (= first coefficient) of one spline column.
struct FixSplineLeft {
    SplineTarget target = SplineTarget::Gamma;
    int eta_index = 0;  // only for target == Eta
    double value = 0;
};

using Constraint = std::variant<FixBeta, FixSplineLeft>;

struct ModelSpec {
    std::optional<KnotVector> time_knots;  // shared by gamma and every eta_l
    bool gamma_active = false;
    std::vector<std::uint8_t> eta_active;  // size = number of z covariates
    std::optional<KnotVector> g_knots;     // absent -> g fixed at zero
    std::vector<Constraint> constraints;
    GradientMode gradient_mode = GradientMode::Auto;

    bool has_g() const { return g_knots.has_value(); }
    bool has_time_basis() const;
    int d2() const { return static_cast<int>(eta_active.size()); }
    int n_eta_active() const;
};

// Structured parameter block.  a holds d2+1 columns of q1 coefficients:
// column 0 is gamma, column 1+l is eta_l.  Inactive columns are all-zero.
struct Parameters {
    std::vector<double> beta;
    std::vector<std::vector<double>> a;
    std::vector<double> b;
};

// Maps between the structured block and the flat free-coordinate vector
// the optimizer and the information matrix work in.  Flat order: free
// betas, then free a-coefficients column by column, then free b.  Fixed or
// inactive coordinates carry flat index -1.
struct ParamLayout {
    int d1 = 0, d2 = 0, q1 = 0, q2 = 0;
    bool gamma_active = false;
    std::vector<std::uint8_t> eta_active;
    std::vector<int> beta_idx;
    std::vector<double> beta_fixed;
    std::vector<std::vector<int>> a_idx;     // (d2+1) x q1
    std::vector<std::vector<double>> a_fixed;
    std::vector<int> b_idx;
    std::vector<double> b_fixed;
    int n_free = 0;
    std::vector<std::string> names;  // per flat coordinate

    std::vector<double> pack(const Parameters& p) const;
    Parameters unpack(std::span<const double> flat) const;
};

// Validates the constraint set against the spec (unknown targets, inactive
// columns, duplicates, out-of-range indices all throw).
ParamLayout make_layout(const ModelSpec& spec, int d1,
                        std::span<const std::string> x_names = {},
                        std::span<const std::string> z_names = {});

SplineFunction gamma_spline(const ModelSpec& spec, const Parameters& p);
SplineFunction eta_spline(const ModelSpec& spec, const Parameters& p, int l);
SplineFunction g_spline(const ModelSpec& spec, const Parameters& p);

// Per-thread evaluation workspace: caches the unpacked parameters, the
// bound covariates and the basis windows of the most recent eval() so the
// partial-derivative fill touches only the order-wide active windows.
class HazardEvaluator {
public:
    HazardEvaluator(const ModelSpec& spec, const ParamLayout& layout);

    void set_params(std::span<const double> flat);
    void bind(std::span<const double> x, std::span<const double> z);
    void bind(const Observation& o) { bind(o.x, o.z); }

    struct Eval {
        double psi = 0, f = 0, df_dlam = 0;
    };

    // Hazard and its lambda-partial at (t, lam); throws OverflowError when
    // |psi| > 700.  Caches basis windows for add_dpsi.
    Eval eval(double t, double lam);

    // out[j] += scale * d psi / d theta_j over free coordinates, using the
    // windows cached by the last eval().  d f / d theta = f * d psi / d theta.
    void add_dpsi(double scale, double* out) const;

    const ModelSpec& spec() const { return *spec_; }
    const ParamLayout& layout() const { return *lay_; }
    const Parameters& params() const { return par_; }

private:
    const ModelSpec* spec_;
    const ParamLayout* lay_;
    Parameters par_;
    std::span<const double> x_, z_;
    double xbeta_ = 0;
    BasisScratch s1_, s2_;
    std::vector<double> n1_, n2_, dn2_;
    int first1_ = 0, first2_ = 0;
    bool time_cached_ = false, g_cached_ = false;
};

// d psi / d theta restricted to the free coordinates, plus f and f_lambda,
// at a single point.  Convenience wrapper over HazardEvaluator for tests
// and one-off use.
struct RhsPartials {
    double f = 0, df_dlam = 0;
    std::vector<double> df_dtheta;  // n_free, = f * dpsi/dtheta
};

double hazard_rhs(const ModelSpec& spec, const ParamLayout& lay,
                  std::span<const double> flat, std::span<const double> x,
                  std::span<const double> z, double t, double lam);

RhsPartials rhs_partials(const ModelSpec& spec, const ParamLayout& lay,
                         std::span<const double> flat, std::span<const double> x,
                         std::span<const double> z, double t, double lam);

// L(t) for one subject by integrating the hazard ODE from 0.
double cumulative_hazard(const ModelSpec& spec, const ParamLayout& lay,
                         std::span<const double> flat, std::span<const double> x,
                         std::span<const double> z, double t,
                         const ode::SolverOptions& opts = {});

}  // namespace odesurv
