#pragma once

// Clamped B-spline bases via the Cox-de Boor recursion.
//
// A basis is described by a KnotVector: order p (= degree + 1), domain
// [a, b] and a sorted list of interior knots.  The full clamped knot
// sequence repeats each boundary p times, giving q = n_interior + p basis
// functions.  Outside [a, b] every function is continued linearly from the
// boundary (value + slope * overshoot), so a spline built on the basis is
// C^1 across the boundary and dot(coeffs, eval_basis(t)) equals
// eval_spline(t) everywhere, including the extension region.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace odesurv {

enum class KnotPlacement { Equal, Quantile };

class KnotVector {
public:
    // Equal spacing: n_interior knots strictly inside (a, b).
    static KnotVector equal(double a, double b, int n_interior, int order);

    // Interior knots at quantiles k/(n_interior+1) of `values`.  Duplicate
    // or out-of-domain candidates are collapsed; throws if none survive
    // while n_interior > 0.
    static KnotVector quantile(double a, double b, int n_interior, int order,
                               std::span<const double> values);

    // Explicit interior knots (sorted, strictly inside the domain).
    static KnotVector explicit_knots(double a, double b,
                                     std::vector<double> interior, int order);

    int order() const { return order_; }
    int degree() const { return order_ - 1; }
    double a() const { return a_; }
    double b() const { return b_; }
    const std::vector<double>& interior() const { return interior_; }
    const std::vector<double>& full() const { return full_; }

    // Number of basis functions.
    int num_basis() const { return static_cast<int>(interior_.size()) + order_; }

    // Index i with full[i] <= t < full[i+1], clamped to the nondegenerate
    // span range; t >= b maps to the last span.
    int find_span(double t) const;

    bool operator==(const KnotVector& o) const = default;

private:
    KnotVector(double a, double b, std::vector<double> interior, int order);

    double a_, b_;
    int order_;
    std::vector<double> interior_;
    std::vector<double> full_;
};

// Scratch space for the recursion, reusable across calls.
struct BasisScratch {
    std::vector<double> left, right, lower, tmp;
};

// Evaluate the `order` basis functions that are nonzero at t (t clamped to
// the domain for the recursion).  Writes them to vals[0..order) and returns
// the index of the first one.  No boundary extension here.
int eval_nonzero(const KnotVector& kv, double t, double* vals, BasisScratch& s);

// Same, also filling first derivatives into ders[0..order).
int eval_nonzero_deriv(const KnotVector& kv, double t, double* vals, double* ders,
                       BasisScratch& s);

// As above but with the linear continuation applied when t is outside
// [a, b]: vals become B(bnd) + B'(bnd) * (t - bnd), ders stay B'(bnd).
int eval_nonzero_ext(const KnotVector& kv, double t, double* vals, BasisScratch& s);
int eval_nonzero_ext_deriv(const KnotVector& kv, double t, double* vals, double* ders,
                           BasisScratch& s);

// Dense versions: all q basis values (zeros outside the active window).
std::vector<double> eval_basis(const KnotVector& kv, double t);
std::vector<double> eval_basis_deriv(const KnotVector& kv, double t);

struct SplineFunction {
    KnotVector knots;
    std::vector<double> coeffs;  // size knots.num_basis()

    double value(double t) const;
    double deriv(double t) const;
    // Left boundary value; equals coeffs.front() for a clamped basis.
    double left_value() const { return coeffs.front(); }
};

double eval_spline(const KnotVector& kv, std::span<const double> coeffs, double t);
double eval_spline_deriv(const KnotVector& kv, std::span<const double> coeffs, double t);

}  // namespace odesurv
