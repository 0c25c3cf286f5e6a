#include "odesurv/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

namespace odesurv {

std::string to_string(ModelClass m) {
    switch (m) {
        case ModelClass::Cox: return "cox";
        case ModelClass::CoxTv: return "cox_tv";
        case ModelClass::Aft: return "aft";
        case ModelClass::Ltm: return "ltm";
        case ModelClass::Flex: return "flex";
    }
    return "?";
}

ModelClass model_class_from_string(const std::string& s) {
    if (s == "cox") return ModelClass::Cox;
    if (s == "cox_tv") return ModelClass::CoxTv;
    if (s == "aft") return ModelClass::Aft;
    if (s == "ltm") return ModelClass::Ltm;
    if (s == "flex") return ModelClass::Flex;
    throw std::invalid_argument("unknown model class: " + s);
}

std::vector<Constraint> default_constraints(ModelClass m) {
    switch (m) {
        case ModelClass::Ltm:
        case ModelClass::Flex:
            // scale and shift normalizations: beta_1 = 1 and g(0) = 0
            return {FixBeta{0, 1.0}, FixSplineLeft{SplineTarget::G, 0, 0.0}};
        default:
            return {};
    }
}

namespace {

bool uses_time_basis(ModelClass m) { return m != ModelClass::Aft; }
bool uses_g(ModelClass m) {
    return m == ModelClass::Aft || m == ModelClass::Ltm || m == ModelClass::Flex;
}
bool uses_eta(ModelClass m) { return m == ModelClass::CoxTv || m == ModelClass::Flex; }

}  // namespace

ModelSpec build_spec(const Dataset& data, const ModelConfig& cfg, double lam_max,
                     std::span<const double> lam_values) {
    const ModelClass m = cfg.model;
    if (!uses_eta(m) && data.d2() > 0)
        throw DataError("model " + to_string(m) +
                        " does not take z covariates; drop them or use cox_tv/flex");

    ModelSpec spec;
    spec.gradient_mode = cfg.gradient_mode;
    if (uses_time_basis(m)) {
        const double tmax = std::max(data.max_time(), 1e-8);
        if (cfg.time_placement == KnotPlacement::Quantile) {
            auto events = data.event_times();
            spec.time_knots = KnotVector::quantile(0.0, tmax, cfg.time_interior,
                                                   cfg.time_order, events);
        } else {
            spec.time_knots =
                KnotVector::equal(0.0, tmax, cfg.time_interior, cfg.time_order);
        }
        spec.gamma_active = true;
        if (uses_eta(m))
            spec.eta_active.assign(static_cast<std::size_t>(data.d2()), 1);
        else
            spec.eta_active.clear();
    }
    if (uses_g(m)) {
        if (!(lam_max > 0))
            throw std::invalid_argument("g basis needs a positive domain end");
        double hi = lam_max;
        if (cfg.g_domain_quantile < 1.0 && !lam_values.empty()) {
            std::vector<double> sorted(lam_values.begin(), lam_values.end());
            std::sort(sorted.begin(), sorted.end());
            double pos = cfg.g_domain_quantile * (static_cast<double>(sorted.size()) - 1);
            auto k = static_cast<std::size_t>(pos);
            double frac = pos - static_cast<double>(k);
            double q = k + 1 < sorted.size()
                           ? sorted[k] + frac * (sorted[k + 1] - sorted[k])
                           : sorted.back();
            if (q > 0) hi = std::min(hi, q);
        }
        if (cfg.g_placement == KnotPlacement::Quantile && !lam_values.empty()) {
            std::vector<double> vals(lam_values.begin(), lam_values.end());
            spec.g_knots =
                KnotVector::quantile(0.0, hi, cfg.g_interior, cfg.g_order, vals);
        } else {
            spec.g_knots = KnotVector::equal(0.0, hi, cfg.g_interior, cfg.g_order);
        }
    }
    spec.constraints = cfg.constraints ? *cfg.constraints : default_constraints(m);
    // drop g constraints that cannot apply (defensive for custom sets)
    std::vector<Constraint> kept;
    for (const auto& c : spec.constraints) {
        if (std::holds_alternative<FixSplineLeft>(c)) {
            const auto& fs = std::get<FixSplineLeft>(c);
            if (fs.target == SplineTarget::G && !spec.has_g()) continue;
            if (fs.target == SplineTarget::Gamma && !spec.gamma_active) continue;
            if (fs.target == SplineTarget::Eta &&
                (fs.eta_index >= static_cast<int>(spec.eta_active.size()) ||
                 !spec.eta_active[fs.eta_index]))
                continue;
        }
        kept.push_back(c);
    }
    spec.constraints = std::move(kept);
    return spec;
}

PipelineResult run_fit_pipeline(const Dataset& data, const ModelConfig& cfg, int workers) {
    data.validate();
    if (data.n_events() == 0) throw DataError("no events in the data");

    PipelineResult out;
    out.info_estimator = cfg.info;

    FitOptions fopts = cfg.fit;
    fopts.workers = workers;

    if (uses_g(cfg.model)) {
        // warm start on a provisional spec to locate the g domain
        ModelConfig provisional = cfg;
        ModelSpec probe = build_spec(data, provisional, 1.0);
        InitResult init = initialize(data, probe, fopts);
        out.lam_max = init.lam_max;
        out.spec = build_spec(data, cfg, init.lam_max, init.lam_values);
        // re-derive the start for the final spec (g knots changed, but b
        // starts at zero either way, so only the shape has to match)
        ParamLayout lay = make_layout(out.spec, data.d1(), data.x_names, data.z_names);
        if (static_cast<int>(init.flat.size()) == lay.n_free) {
            fopts.init = InitMode::User;
            fopts.user_init = init.flat;
        } else {
            fopts.init = InitMode::Zeros;
        }
        FitResult fr = fit(data, out.spec, fopts);
        if (!fr.converged && fopts.init == InitMode::User) {
            // a warm start can strand the optimizer on the feasibility
            // boundary; a cold start explores from tame territory
            FitOptions cold = fopts;
            cold.init = InitMode::Zeros;
            cold.user_init.clear();
            FitResult fr2 = fit(data, out.spec, cold);
            if (fr2.converged || (!fr.converged && fr2.loglik > fr.loglik))
                fr = std::move(fr2);
        }
        fr.warm_start_fallback = init.fallback;
        out.fit = std::move(fr);
        out.layout = std::move(lay);
    } else {
        out.spec = build_spec(data, cfg, 0.0);
        out.layout = make_layout(out.spec, data.d1(), data.x_names, data.z_names);
        fopts.init = InitMode::Zeros;
        out.fit = fit(data, out.spec, fopts);
        out.lam_max = 0.0;
    }

    EvalOptions eopts;
    eopts.ode = cfg.fit.ode;
    eopts.workers = workers;
    out.info = information_matrix(data, out.spec, out.layout, out.fit.flat_hat, eopts,
                                  cfg.info);
    CovarianceResult cr = invert_information(out.info, data.n());
    out.cov = std::move(cr.cov);
    out.cov_condition = cr.condition;
    out.se = std_errors(out.cov);
    auto cis = wald_intervals(out.fit.flat_hat, out.se, 0.95);
    out.ci_lo.resize(cis.size());
    out.ci_hi.resize(cis.size());
    for (std::size_t i = 0; i < cis.size(); ++i) {
        out.ci_lo[i] = cis[i].lo;
        out.ci_hi[i] = cis[i].hi;
    }
    return out;
}

}  // namespace odesurv
