#include "odesurv/splines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace odesurv {

namespace {

void check_domain(double a, double b, int n_interior, int order) {
    if (!(a < b)) throw std::invalid_argument("knot domain must satisfy a < b");
    if (order < 1) throw std::invalid_argument("spline order must be >= 1");
    if (n_interior < 0) throw std::invalid_argument("negative interior knot count");
}

// Type-7 sample quantile of sorted values.
double quantile7(const std::vector<double>& sorted, double p) {
    const auto n = sorted.size();
    if (n == 1) return sorted[0];
    double h = p * static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= n - 1) return sorted[n - 1];
    double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

KnotVector::KnotVector(double a, double b, std::vector<double> interior, int order)
    : a_(a), b_(b), order_(order), interior_(std::move(interior)) {
    full_.reserve(interior_.size() + 2 * static_cast<std::size_t>(order_));
    full_.insert(full_.end(), order_, a_);
    full_.insert(full_.end(), interior_.begin(), interior_.end());
    full_.insert(full_.end(), order_, b_);
}

KnotVector KnotVector::equal(double a, double b, int n_interior, int order) {
    check_domain(a, b, n_interior, order);
    std::vector<double> interior(n_interior);
    for (int k = 1; k <= n_interior; ++k)
        interior[k - 1] = a + (b - a) * k / (n_interior + 1);
    return KnotVector(a, b, std::move(interior), order);
}

KnotVector KnotVector::quantile(double a, double b, int n_interior, int order,
                                std::span<const double> values) {
    check_domain(a, b, n_interior, order);
    if (n_interior == 0) return KnotVector(a, b, {}, order);
    if (values.empty())
        throw std::invalid_argument("quantile knot placement needs sample values");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> interior;
    interior.reserve(n_interior);
    for (int k = 1; k <= n_interior; ++k) {
        double t = quantile7(sorted, static_cast<double>(k) / (n_interior + 1));
        if (t <= a || t >= b) continue;  // degenerate candidate, drop
        if (!interior.empty() && t <= interior.back()) continue;  // duplicate
        interior.push_back(t);
    }
    if (interior.empty())
        throw std::invalid_argument(
            "quantile knot placement collapsed: no distinct interior knots");
    return KnotVector(a, b, std::move(interior), order);
}

KnotVector KnotVector::explicit_knots(double a, double b, std::vector<double> interior,
                                      int order) {
    check_domain(a, b, static_cast<int>(interior.size()), order);
    for (std::size_t i = 0; i < interior.size(); ++i) {
        if (interior[i] <= a || interior[i] >= b)
            throw std::invalid_argument("interior knot outside the open domain");
        if (i > 0 && interior[i] <= interior[i - 1])
            throw std::invalid_argument("interior knots must be strictly increasing");
    }
    return KnotVector(a, b, std::move(interior), order);
}

int KnotVector::find_span(double t) const {
    const int p = order_;
    const int last = num_basis() - 1;  // last nondegenerate span index
    if (t >= b_) return last;
    if (t <= a_) return p - 1;
    // binary search: largest i with full_[i] <= t
    int lo = p - 1, hi = last;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (full_[mid] <= t)
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

namespace {

// Cox-de Boor on the nonzero window; t must already be inside [a, b].
int nonzero_window(const KnotVector& kv, double t, double* vals, BasisScratch& s) {
    const int p = kv.order();
    const int d = p - 1;
    const auto& U = kv.full();
    const int i = kv.find_span(t);
    s.left.resize(p);
    s.right.resize(p);
    vals[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
        s.left[j] = t - U[i + 1 - j];
        s.right[j] = U[i + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double temp = vals[r] / (s.right[r + 1] + s.left[j - r]);
            vals[r] = saved + s.right[r + 1] * temp;
            saved = s.left[j - r] * temp;
        }
        vals[j] = saved;
    }
    return i - d;
}

// First derivatives from the order-reduction identity
//   B'_{j,p} = (p-1) * ( B_{j,p-1}/(u_{j+p-1}-u_j) - B_{j+1,p-1}/(u_{j+p}-u_{j+1}) )
// using the (p-1)-order window at the same span.
void window_derivs(const KnotVector& kv, double t, int first, double* ders,
                   BasisScratch& s) {
    const int p = kv.order();
    const int d = p - 1;
    if (d == 0) {
        ders[0] = 0.0;
        return;
    }
    const auto& U = kv.full();
    const int i = first + d;  // span index
    // lower-order window: indices i-d+1 .. i, d values
    s.lower.resize(d);
    s.lower[0] = 1.0;
    for (int j = 1; j < d; ++j) {
        s.left[j] = t - U[i + 1 - j];
        s.right[j] = U[i + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double temp = s.lower[r] / (s.right[r + 1] + s.left[j - r]);
            s.lower[r] = saved + s.right[r + 1] * temp;
            saved = s.left[j - r] * temp;
        }
        s.lower[j] = saved;
    }
    const int lo_first = i - d + 1;
    for (int r = 0; r <= d; ++r) {
        const int j = first + r;
        double acc = 0.0;
        double den1 = U[j + p - 1] - U[j];
        if (den1 > 0.0 && j >= lo_first && j <= lo_first + d - 1)
            acc += s.lower[j - lo_first] / den1;
        double den2 = U[j + p] - U[j + 1];
        if (den2 > 0.0 && j + 1 >= lo_first && j + 1 <= lo_first + d - 1)
            acc -= s.lower[j + 1 - lo_first] / den2;
        ders[r] = d * acc;
    }
}

}  // namespace

int eval_nonzero(const KnotVector& kv, double t, double* vals, BasisScratch& s) {
    double tc = std::clamp(t, kv.a(), kv.b());
    return nonzero_window(kv, tc, vals, s);
}

int eval_nonzero_deriv(const KnotVector& kv, double t, double* vals, double* ders,
                       BasisScratch& s) {
    double tc = std::clamp(t, kv.a(), kv.b());
    int first = nonzero_window(kv, tc, vals, s);
    window_derivs(kv, tc, first, ders, s);
    return first;
}

int eval_nonzero_ext(const KnotVector& kv, double t, double* vals, BasisScratch& s) {
    if (t >= kv.a() && t <= kv.b()) return nonzero_window(kv, t, vals, s);
    const double bnd = t < kv.a() ? kv.a() : kv.b();
    s.tmp.resize(kv.order());
    int first = nonzero_window(kv, bnd, vals, s);
    window_derivs(kv, bnd, first, s.tmp.data(), s);
    const double dt = t - bnd;
    for (int r = 0; r < kv.order(); ++r) vals[r] += s.tmp[r] * dt;
    return first;
}

int eval_nonzero_ext_deriv(const KnotVector& kv, double t, double* vals, double* ders,
                           BasisScratch& s) {
    if (t >= kv.a() && t <= kv.b()) {
        int first = nonzero_window(kv, t, vals, s);
        window_derivs(kv, t, first, ders, s);
        return first;
    }
    const double bnd = t < kv.a() ? kv.a() : kv.b();
    int first = nonzero_window(kv, bnd, vals, s);
    window_derivs(kv, bnd, first, ders, s);
    const double dt = t - bnd;
    for (int r = 0; r < kv.order(); ++r) vals[r] += ders[r] * dt;
    return first;
}

std::vector<double> eval_basis(const KnotVector& kv, double t) {
    std::vector<double> out(kv.num_basis(), 0.0);
    std::vector<double> w(kv.order());
    BasisScratch s;
    int first = eval_nonzero_ext(kv, t, w.data(), s);
    for (int r = 0; r < kv.order(); ++r) out[first + r] = w[r];
    return out;
}

std::vector<double> eval_basis_deriv(const KnotVector& kv, double t) {
    std::vector<double> out(kv.num_basis(), 0.0);
    std::vector<double> w(kv.order()), d(kv.order());
    BasisScratch s;
    int first = eval_nonzero_ext_deriv(kv, t, w.data(), d.data(), s);
    for (int r = 0; r < kv.order(); ++r) out[first + r] = d[r];
    return out;
}

double eval_spline(const KnotVector& kv, std::span<const double> coeffs, double t) {
    if (static_cast<int>(coeffs.size()) != kv.num_basis())
        throw std::invalid_argument("coefficient count does not match the basis");
    std::vector<double> w(kv.order());
    BasisScratch s;
    int first = eval_nonzero_ext(kv, t, w.data(), s);
    double acc = 0.0;
    for (int r = 0; r < kv.order(); ++r) acc += w[r] * coeffs[first + r];
    return acc;
}

double eval_spline_deriv(const KnotVector& kv, std::span<const double> coeffs, double t) {
    if (static_cast<int>(coeffs.size()) != kv.num_basis())
        throw std::invalid_argument("coefficient count does not match the basis");
    std::vector<double> w(kv.order()), d(kv.order());
    BasisScratch s;
    int first = eval_nonzero_ext_deriv(kv, t, w.data(), d.data(), s);
    double acc = 0.0;
    for (int r = 0; r < kv.order(); ++r) acc += d[r] * coeffs[first + r];
    return acc;
}

double SplineFunction::value(double t) const { return eval_spline(knots, coeffs, t); }
double SplineFunction::deriv(double t) const { return eval_spline_deriv(knots, coeffs, t); }

}  // namespace odesurv
