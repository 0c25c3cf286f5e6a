#pragma once

// Shared builders for the unit tests: least-squares projection onto a
// spline basis, small model specs of each class, random parameter draws
// and a quick synthetic dataset.

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "odesurv/model.hpp"

namespace testutil {

using namespace odesurv;

inline std::vector<double> project(const KnotVector& kv,
                                   const std::function<double(double)>& f,
                                   int n_grid = 400, double lo = -1, double hi = -1) {
    if (lo < 0) lo = kv.a();
    if (hi < 0) hi = kv.b();
    const int q = kv.num_basis();
    Eigen::MatrixXd A(n_grid, q);
    Eigen::VectorXd y(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        double t = lo + (hi - lo) * i / (n_grid - 1.0);
        std::vector<double> row = eval_basis(kv, t);
        for (int j = 0; j < q; ++j) A(i, j) = row[j];
        y(i) = f(t);
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    return {c.data(), c.data() + q};
}

inline ModelSpec spec_cox(int d2 = 0, int interior = 3, double t_hi = 2.0) {
    ModelSpec s;
    s.time_knots = KnotVector::equal(0, t_hi, interior, 4);
    s.gamma_active = true;
    s.eta_active.assign(d2, 1);
    return s;
}

inline ModelSpec spec_coxtv(int d2 = 1, int interior = 3, double t_hi = 2.0) {
    ModelSpec s = spec_cox(d2, interior, t_hi);
    return s;
}

inline ModelSpec spec_aft(int interior = 3, double u_hi = 3.0) {
    ModelSpec s;
    s.eta_active.clear();
    s.g_knots = KnotVector::equal(0, u_hi, interior, 4);
    return s;
}

inline ModelSpec spec_flex(int d2 = 0, int interior = 3, double t_hi = 2.0,
                           double u_hi = 3.0, bool constrained = true) {
    ModelSpec s = spec_cox(d2, interior, t_hi);
    s.g_knots = KnotVector::equal(0, u_hi, interior, 4);
    if (constrained) {
        s.constraints.push_back(FixBeta{0, 1.0});
        s.constraints.push_back(FixSplineLeft{SplineTarget::G, 0, 0.0});
    }
    return s;
}

inline std::vector<double> rand_flat(const ParamLayout& lay, std::mt19937_64& rng,
                                     double scale = 0.3) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(lay.n_free);
    for (double& x : v) x = g(rng);
    // keep the feedback spline nonincreasing: with a positive slope at the
    // right edge the hazard ode can blow up in finite time, which is a
    // modeling pathology rather than a property worth sampling here
    std::vector<int> gpos;
    for (int j = 0; j < lay.q2; ++j)
        if (lay.b_idx[j] >= 0) gpos.push_back(lay.b_idx[j]);
    if (!gpos.empty()) {
        std::vector<double> vals;
        vals.reserve(gpos.size());
        for (int idx : gpos) vals.push_back(v[idx]);
        std::sort(vals.begin(), vals.end(), std::greater<>());
        for (std::size_t k = 0; k < gpos.size(); ++k) v[gpos[k]] = vals[k];
    }
    return v;
}

// five-point central difference of f at offset 0 with spacing h
inline double fd5(const std::function<double(double)>& f, double h) {
    return (-f(2 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2 * h)) / (12.0 * h);
}

// censored toy data with smooth covariates; not tied to any design
inline Dataset rand_dataset(int n, int d1, int d2, std::uint64_t seed,
                            double y_hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uy(0.05, y_hi);
    std::bernoulli_distribution ev(0.75);
    std::normal_distribution<double> gx(0.0, 0.7);
    Dataset d;
    for (int k = 0; k < d1; ++k) d.x_names.push_back("x" + std::to_string(k + 1));
    for (int k = 0; k < d2; ++k) d.z_names.push_back("z" + std::to_string(k + 1));
    d.obs.resize(n);
    for (auto& o : d.obs) {
        o.y = uy(rng);
        o.delta = ev(rng) ? 1 : 0;
        o.x.resize(d1);
        for (double& v : o.x) v = gx(rng);
        o.z.resize(d2);
        for (double& v : o.z) v = gx(rng);
    }
    if (n > 0) d.obs[0].delta = 1;
    return d;
}

}  // namespace testutil
