#include "odesurv/model.hpp"

#include <algorithm>
#include <cmath>

namespace odesurv {

int Dataset::n_events() const {
    int c = 0;
    for (const auto& o : obs) c += o.delta;
    return c;
}

double Dataset::max_time() const {
    double m = 0;
    for (const auto& o : obs) m = std::max(m, o.y);
    return m;
}

std::vector<double> Dataset::event_times() const {
    std::vector<double> t;
    for (const auto& o : obs)
        if (o.delta == 1) t.push_back(o.y);
    return t;
}

void Dataset::validate() const {
    const auto d1v = x_names.size();
    const auto d2v = z_names.size();
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto& o = obs[i];
        if (!(o.y >= 0) || !std::isfinite(o.y))
            throw DataError("observation " + std::to_string(i) + ": bad time");
        if (o.delta != 0 && o.delta != 1)
            throw DataError("observation " + std::to_string(i) + ": status not 0/1");
        if (o.x.size() != d1v || o.z.size() != d2v)
            throw DataError("observation " + std::to_string(i) + ": covariate size mismatch");
        for (double v : o.x)
            if (!std::isfinite(v))
                throw DataError("observation " + std::to_string(i) + ": non-finite x");
        for (double v : o.z)
            if (!std::isfinite(v))
                throw DataError("observation " + std::to_string(i) + ": non-finite z");
    }
}

bool ModelSpec::has_time_basis() const {
    if (!time_knots.has_value()) return false;
    if (gamma_active) return true;
    return n_eta_active() > 0;
}

int ModelSpec::n_eta_active() const {
    int c = 0;
    for (auto e : eta_active) c += e ? 1 : 0;
    return c;
}

namespace {

bool column_active(const ModelSpec& spec, int col) {
    if (col == 0) return spec.gamma_active;
    return spec.eta_active[col - 1] != 0;
}

}  // namespace

ParamLayout make_layout(const ModelSpec& spec, int d1,
                        std::span<const std::string> x_names,
                        std::span<const std::string> z_names) {
    if (d1 < 0) throw std::invalid_argument("negative covariate count");
    if ((spec.gamma_active || spec.n_eta_active() > 0) && !spec.time_knots)
        throw std::invalid_argument("active time-indexed terms need time knots");

    ParamLayout lay;
    lay.d1 = d1;
    lay.d2 = spec.d2();
    lay.gamma_active = spec.gamma_active;
    lay.eta_active = spec.eta_active;
    lay.q1 = spec.time_knots ? spec.time_knots->num_basis() : 0;
    lay.q2 = spec.g_knots ? spec.g_knots->num_basis() : 0;

    lay.beta_idx.assign(d1, -1);
    lay.beta_fixed.assign(d1, 0.0);
    lay.a_idx.assign(lay.d2 + 1, std::vector<int>(lay.q1, -1));
    lay.a_fixed.assign(lay.d2 + 1, std::vector<double>(lay.q1, 0.0));
    lay.b_idx.assign(lay.q2, -1);
    lay.b_fixed.assign(lay.q2, 0.0);

    std::vector<bool> beta_pinned(d1, false);
    std::vector<bool> col_pinned(lay.d2 + 1, false);
    bool g_pinned = false;

    for (const auto& c : spec.constraints) {
        if (std::holds_alternative<FixBeta>(c)) {
            const auto& fb = std::get<FixBeta>(c);
            if (fb.index < 0 || fb.index >= d1)
                throw std::invalid_argument("beta constraint index out of range");
            if (beta_pinned[fb.index])
                throw std::invalid_argument("duplicate beta constraint");
            beta_pinned[fb.index] = true;
            lay.beta_fixed[fb.index] = fb.value;
        } else {
            const auto& fs = std::get<FixSplineLeft>(c);
            switch (fs.target) {
                case SplineTarget::Gamma:
                    if (!spec.gamma_active)
                        throw std::invalid_argument("gamma constraint on inactive gamma");
                    if (col_pinned[0]) throw std::invalid_argument("duplicate gamma constraint");
                    col_pinned[0] = true;
                    lay.a_fixed[0][0] = fs.value;
                    break;
                case SplineTarget::Eta: {
                    int l = fs.eta_index;
                    if (l < 0 || l >= lay.d2 || !spec.eta_active[l])
                        throw std::invalid_argument("eta constraint on a missing column");
                    if (col_pinned[1 + l]) throw std::invalid_argument("duplicate eta constraint");
                    col_pinned[1 + l] = true;
                    lay.a_fixed[1 + l][0] = fs.value;
                    break;
                }
                case SplineTarget::G:
                    if (!spec.has_g())
                        throw std::invalid_argument("g constraint without a g basis");
                    if (g_pinned) throw std::invalid_argument("duplicate g constraint");
                    g_pinned = true;
                    lay.b_fixed[0] = fs.value;
                    break;
            }
        }
    }

    auto xname = [&](int k) {
        return k < static_cast<int>(x_names.size()) ? x_names[k]
                                                    : "x" + std::to_string(k + 1);
    };
    auto zname = [&](int l) {
        return l < static_cast<int>(z_names.size()) ? z_names[l]
                                                    : "z" + std::to_string(l + 1);
    };

    int next = 0;
    for (int k = 0; k < d1; ++k) {
        if (beta_pinned[k]) continue;
        lay.beta_idx[k] = next++;
        lay.names.push_back("beta:" + xname(k));
    }
    for (int col = 0; col <= lay.d2; ++col) {
        if (!column_active(spec, col)) continue;
        for (int j = 0; j < lay.q1; ++j) {
            if (j == 0 && col_pinned[col]) continue;
            lay.a_idx[col][j] = next++;
            if (col == 0)
                lay.names.push_back("gamma[" + std::to_string(j) + "]");
            else
                lay.names.push_back("eta:" + zname(col - 1) + "[" + std::to_string(j) + "]");
        }
    }
    for (int j = 0; j < lay.q2; ++j) {
        if (j == 0 && g_pinned) continue;
        lay.b_idx[j] = next++;
        lay.names.push_back("g[" + std::to_string(j) + "]");
    }
    lay.n_free = next;
    return lay;
}

std::vector<double> ParamLayout::pack(const Parameters& p) const {
    if (static_cast<int>(p.beta.size()) != d1 ||
        static_cast<int>(p.a.size()) != d2 + 1 ||
        static_cast<int>(p.b.size()) != q2)
        throw std::invalid_argument("parameter block shape mismatch");
    std::vector<double> flat(n_free, 0.0);
    for (int k = 0; k < d1; ++k)
        if (beta_idx[k] >= 0) flat[beta_idx[k]] = p.beta[k];
    for (int col = 0; col <= d2; ++col) {
        if (!p.a[col].empty() && static_cast<int>(p.a[col].size()) != q1)
            throw std::invalid_argument("spline column size mismatch");
        for (int j = 0; j < q1; ++j)
            if (a_idx[col][j] >= 0) flat[a_idx[col][j]] = p.a[col][j];
    }
    for (int j = 0; j < q2; ++j)
        if (b_idx[j] >= 0) flat[b_idx[j]] = p.b[j];
    return flat;
}

Parameters ParamLayout::unpack(std::span<const double> flat) const {
    if (static_cast<int>(flat.size()) != n_free)
        throw std::invalid_argument("flat parameter length mismatch");
    Parameters p;
    p.beta.assign(d1, 0.0);
    for (int k = 0; k < d1; ++k)
        p.beta[k] = beta_idx[k] >= 0 ? flat[beta_idx[k]] : beta_fixed[k];
    p.a.assign(d2 + 1, std::vector<double>(q1, 0.0));
    for (int col = 0; col <= d2; ++col)
        for (int j = 0; j < q1; ++j)
            p.a[col][j] = a_idx[col][j] >= 0 ? flat[a_idx[col][j]] : a_fixed[col][j];
    p.b.assign(q2, 0.0);
    for (int j = 0; j < q2; ++j)
        p.b[j] = b_idx[j] >= 0 ? flat[b_idx[j]] : b_fixed[j];
    return p;
}

SplineFunction gamma_spline(const ModelSpec& spec, const Parameters& p) {
    if (!spec.gamma_active || !spec.time_knots)
        throw std::invalid_argument("gamma is not active in this spec");
    return SplineFunction{*spec.time_knots, p.a[0]};
}

SplineFunction eta_spline(const ModelSpec& spec, const Parameters& p, int l) {
    if (l < 0 || l >= spec.d2() || !spec.eta_active[l] || !spec.time_knots)
        throw std::invalid_argument("eta column is not active in this spec");
    return SplineFunction{*spec.time_knots, p.a[1 + l]};
}

SplineFunction g_spline(const ModelSpec& spec, const Parameters& p) {
    if (!spec.has_g()) throw std::invalid_argument("g is not active in this spec");
    return SplineFunction{*spec.g_knots, p.b};
}

HazardEvaluator::HazardEvaluator(const ModelSpec& spec, const ParamLayout& layout)
    : spec_(&spec), lay_(&layout) {
    if (spec.time_knots) n1_.resize(spec.time_knots->order());
    if (spec.g_knots) {
        n2_.resize(spec.g_knots->order());
        dn2_.resize(spec.g_knots->order());
    }
}

void HazardEvaluator::set_params(std::span<const double> flat) {
    par_ = lay_->unpack(flat);
}

void HazardEvaluator::bind(std::span<const double> x, std::span<const double> z) {
    if (static_cast<int>(x.size()) != lay_->d1 ||
        static_cast<int>(z.size()) != lay_->d2)
        throw std::invalid_argument("covariate size does not match the layout");
    x_ = x;
    z_ = z;
    xbeta_ = 0;
    for (int k = 0; k < lay_->d1; ++k) xbeta_ += x_[k] * par_.beta[k];
}

HazardEvaluator::Eval HazardEvaluator::eval(double t, double lam) {
    double psi = xbeta_;
    time_cached_ = false;
    g_cached_ = false;

    if (spec_->has_time_basis()) {
        const auto& kv = *spec_->time_knots;
        first1_ = eval_nonzero_ext(kv, t, n1_.data(), s1_);
        const int p = kv.order();
        if (spec_->gamma_active) {
            const auto& col = par_.a[0];
            double acc = 0;
            for (int r = 0; r < p; ++r) acc += n1_[r] * col[first1_ + r];
            psi += acc;
        }
        for (int l = 0; l < lay_->d2; ++l) {
            if (!spec_->eta_active[l]) continue;
            const auto& col = par_.a[1 + l];
            double acc = 0;
            for (int r = 0; r < p; ++r) acc += n1_[r] * col[first1_ + r];
            psi += acc * z_[l];
        }
        time_cached_ = true;
    }

    double gp = 0;
    if (spec_->has_g()) {
        const auto& kv = *spec_->g_knots;
        first2_ = eval_nonzero_ext_deriv(kv, lam, n2_.data(), dn2_.data(), s2_);
        const int p = kv.order();
        double acc = 0;
        for (int r = 0; r < p; ++r) {
            acc += n2_[r] * par_.b[first2_ + r];
            gp += dn2_[r] * par_.b[first2_ + r];
        }
        psi += acc;
        g_cached_ = true;
    }

    if (!(std::abs(psi) <= 700.0))
        throw OverflowError("hazard exponent out of range (psi = " +
                            std::to_string(psi) + ")");
    Eval e;
    e.psi = psi;
    e.f = std::exp(psi);
    e.df_dlam = e.f * gp;
    return e;
}

void HazardEvaluator::add_dpsi(double scale, double* out) const {
    for (int k = 0; k < lay_->d1; ++k) {
        int idx = lay_->beta_idx[k];
        if (idx >= 0) out[idx] += scale * x_[k];
    }
    if (time_cached_) {
        const int p = spec_->time_knots->order();
        if (spec_->gamma_active) {
            const auto& idxs = lay_->a_idx[0];
            for (int r = 0; r < p; ++r) {
                int idx = idxs[first1_ + r];
                if (idx >= 0) out[idx] += scale * n1_[r];
            }
        }
        for (int l = 0; l < lay_->d2; ++l) {
            if (!spec_->eta_active[l]) continue;
            const auto& idxs = lay_->a_idx[1 + l];
            const double w = scale * z_[l];
            for (int r = 0; r < p; ++r) {
                int idx = idxs[first1_ + r];
                if (idx >= 0) out[idx] += w * n1_[r];
            }
        }
    }
    if (g_cached_) {
        const int p = spec_->g_knots->order();
        for (int r = 0; r < p; ++r) {
            int idx = lay_->b_idx[first2_ + r];
            if (idx >= 0) out[idx] += scale * n2_[r];
        }
    }
}

double hazard_rhs(const ModelSpec& spec, const ParamLayout& lay,
                  std::span<const double> flat, std::span<const double> x,
                  std::span<const double> z, double t, double lam) {
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    return ev.eval(t, lam).f;
}

RhsPartials rhs_partials(const ModelSpec& spec, const ParamLayout& lay,
                         std::span<const double> flat, std::span<const double> x,
                         std::span<const double> z, double t, double lam) {
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    auto e = ev.eval(t, lam);
    RhsPartials out;
    out.f = e.f;
    out.df_dlam = e.df_dlam;
    out.df_dtheta.assign(lay.n_free, 0.0);
    ev.add_dpsi(e.f, out.df_dtheta.data());
    return out;
}

double cumulative_hazard(const ModelSpec& spec, const ParamLayout& lay,
                         std::span<const double> flat, std::span<const double> x,
                         std::span<const double> z, double t,
                         const ode::SolverOptions& opts) {
    if (!(t >= 0)) throw std::invalid_argument("cumulative hazard needs t >= 0");
    if (t == 0) return 0.0;
    HazardEvaluator ev(spec, lay);
    ev.set_params(flat);
    ev.bind(x, z);
    ode::IvpProblem p;
    p.rhs = [&ev](double tt, double y) { return ev.eval(tt, y).f; };
    p.t0 = 0;
    p.y0 = 0;
    p.t_end = t;
    return ode::solve_ivp(p, opts);
}

}  // namespace odesurv
