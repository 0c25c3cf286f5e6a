#include "odesurv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "odesurv/io.hpp"
#include "odesurv/parallel.hpp"
#include "odesurv/pipeline.hpp"
#include "odesurv/simulate.hpp"
#include "odesurv/version.hpp"

namespace odesurv {

namespace {

int env_workers() {
    const char* w = std::getenv("ODESURV_WORKERS");
    if (!w) return 0;
    try {
        return std::max(0, std::stoi(w));
    } catch (...) {
        return 0;
    }
}

std::vector<Constraint> parse_constraints(const std::string& s) {
    std::vector<Constraint> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw DataError("constraint '" + tok + "' is not name=value");
        std::string name = tok.substr(0, eq);
        double value = 0;
        try {
            value = std::stod(tok.substr(eq + 1));
        } catch (...) {
            throw DataError("constraint '" + tok + "' has a bad value");
        }
        if (name == "g0") {
            out.push_back(FixSplineLeft{SplineTarget::G, 0, value});
        } else if (name == "gamma0") {
            out.push_back(FixSplineLeft{SplineTarget::Gamma, 0, value});
        } else if (name.rfind("beta", 0) == 0 && name.size() > 4) {
            int k = 0;
            try {
                k = std::stoi(name.substr(4));
            } catch (...) {
                throw DataError("constraint '" + tok + "': bad beta index");
            }
            if (k < 1) throw DataError("beta indices are 1-based");
            out.push_back(FixBeta{k - 1, value});
        } else {
            throw DataError("unknown constraint '" + name +
                            "' (use beta<k>=v, gamma0=v or g0=v)");
        }
    }
    return out;
}

void write_band_csv(const std::string& path, std::span<const double> grid,
                    const Band& band, bool exp_scale) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "t,est,lo,hi,extrapolated\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double e = band.est[i], l = band.lo[i], h = band.hi[i];
        if (exp_scale) {
            e = std::exp(e);
            l = std::exp(l);
            h = std::exp(h);
        }
        out << io::format_double(grid[i]) << "," << io::format_double(e) << ","
            << io::format_double(l) << "," << io::format_double(h) << ","
            << int(band.extrapolated[i]) << "\n";
    }
}

struct FitArgs {
    std::string data_path, model, out = "fit.json", curves_prefix, constraints;
    std::string placement = "quantile", gradient = "auto", info = "opg";
    std::string grid = "0:0.02:2";
    int time_interior = 6, time_order = 4, g_interior = 6, g_order = 4;
    double grad_tol = 1e-6, rel_tol = 1e-8, abs_tol = 1e-10;
    int max_iters = 500, workers = -1;
};

ModelConfig config_from(const FitArgs& a) {
    ModelConfig cfg;
    cfg.model = model_class_from_string(a.model);
    cfg.time_interior = a.time_interior;
    cfg.time_order = a.time_order;
    cfg.g_interior = a.g_interior;
    cfg.g_order = a.g_order;
    cfg.time_placement =
        a.placement == "equal" ? KnotPlacement::Equal : KnotPlacement::Quantile;
    if (a.placement != "equal" && a.placement != "quantile")
        throw DataError("placement must be equal or quantile");
    if (a.gradient == "forward") cfg.gradient_mode = GradientMode::Forward;
    else if (a.gradient == "adjoint") cfg.gradient_mode = GradientMode::Adjoint;
    else if (a.gradient == "auto") cfg.gradient_mode = GradientMode::Auto;
    else throw DataError("gradient mode must be auto, forward or adjoint");
    if (a.info == "opg") cfg.info = InfoEstimator::Opg;
    else if (a.info == "hessian") cfg.info = InfoEstimator::NumericHessian;
    else throw DataError("info estimator must be opg or hessian");
    if (!a.constraints.empty()) cfg.constraints = parse_constraints(a.constraints);
    cfg.fit.grad_tol = a.grad_tol;
    cfg.fit.max_iters = a.max_iters;
    cfg.fit.ode.rel_tol = a.rel_tol;
    cfg.fit.ode.abs_tol = a.abs_tol;
    return cfg;
}

int resolve_cli_workers(int flag) {
    if (flag >= 0) return flag == 0 ? resolve_workers(0) : flag;
    int env = env_workers();
    return env > 0 ? env : resolve_workers(0);
}

int cmd_fit(const FitArgs& a) {
    Dataset data = io::read_dataset_csv(a.data_path);
    ModelConfig cfg = config_from(a);
    const int workers = resolve_cli_workers(a.workers);
    PipelineResult res = run_fit_pipeline(data, cfg, workers);

    io::write_json(io::fit_to_json(data, cfg, res), a.out);

    std::cout << "model " << to_string(cfg.model) << ", n=" << data.n()
              << ", events=" << data.n_events() << "\n";
    std::cout << "loglik " << res.fit.loglik << " after " << res.fit.iters
              << " iterations (" << (res.fit.converged ? "converged" : "NOT converged")
              << ", grad " << res.fit.grad_norm << ")\n";
    for (std::size_t i = 0; i < res.layout.names.size(); ++i) {
        if (res.layout.names[i].rfind("beta:", 0) != 0) continue;
        std::cout << "  " << res.layout.names[i] << " = " << res.fit.flat_hat[i]
                  << "  se " << res.se[i] << "  ci [" << res.ci_lo[i] << ", "
                  << res.ci_hi[i] << "]\n";
    }

    if (!a.curves_prefix.empty()) {
        auto grid = io::parse_grid(a.grid);
        if (res.spec.gamma_active) {
            Band b = pointwise_band(res.spec, res.layout, res.fit.theta_hat, res.cov,
                                    SplineTarget::Gamma, 0, grid);
            write_band_csv(a.curves_prefix + "_alpha.csv", grid, b, true);
        }
        for (int l = 0; l < res.spec.d2(); ++l) {
            if (!res.spec.eta_active[l]) continue;
            Band b = pointwise_band(res.spec, res.layout, res.fit.theta_hat, res.cov,
                                    SplineTarget::Eta, l, grid);
            write_band_csv(a.curves_prefix + "_eta_" + data.z_names[l] + ".csv", grid, b,
                           false);
        }
        if (res.spec.has_g()) {
            std::vector<double> ugrid(101);
            for (int i = 0; i <= 100; ++i) ugrid[i] = res.lam_max * i / 100.0;
            Band b = pointwise_band(res.spec, res.layout, res.fit.theta_hat, res.cov,
                                    SplineTarget::G, 0, ugrid);
            write_band_csv(a.curves_prefix + "_q.csv", ugrid, b, true);
        }
    }
    return res.fit.converged ? 0 : 3;
}

struct SimArgs {
    std::string setting = "s1", out = "data.csv", design_in, design_out;
    int n = 500, rep = 0;
    std::uint64_t seed = 1;
    double censor_upper = 0;
};

int cmd_simulate(const SimArgs& a) {
    StudyDesign d = a.design_in.empty()
                        ? make_design(a.setting, a.n, a.seed, a.censor_upper)
                        : io::design_from_json(io::read_json(a.design_in));
    Dataset data = gen_dataset(d, a.rep);
    io::write_dataset_csv(data, a.out);
    if (!a.design_out.empty()) io::write_json(io::design_to_json(d), a.design_out);
    std::cout << "wrote " << data.n() << " rows (" << data.n_events() << " events, "
              << censoring_rate(data) * 100.0 << "% censored) to " << a.out << "\n";
    return 0;
}

struct RepArgs {
    std::string setting = "s1", models = "cox_tv", out, json_out;
    std::string placement, info = "opg";
    int n = 500, reps = 100, workers = -1;
    std::uint64_t seed = 1;
    int time_interior = 6, time_order = 4, g_interior = 6, g_order = 4;
    bool fix_beta1 = false;
    double grad_tol = 1e-6;
    int max_iters = 500;
};

int cmd_replicate(const RepArgs& a) {
    StudyDesign d = make_design(a.setting, a.n, a.seed);
    std::vector<std::string> model_names;
    {
        std::stringstream ss(a.models);
        std::string tok;
        while (std::getline(ss, tok, ',')) model_names.push_back(tok);
    }
    if (model_names.empty()) throw DataError("no models given");

    const int workers = resolve_cli_workers(a.workers);
    std::vector<StudyMetrics> all;
    for (const auto& name : model_names) {
        ModelConfig cfg;
        cfg.model = model_class_from_string(name);
        cfg.time_interior = a.time_interior;
        cfg.time_order = a.time_order;
        cfg.g_interior = a.g_interior;
        cfg.g_order = a.g_order;
        cfg.info = a.info == "hessian" ? InfoEstimator::NumericHessian : InfoEstimator::Opg;
        // the first design places time knots at event-time quantiles, the
        // others use equal spacing; --placement overrides
        cfg.time_placement = (a.placement.empty() ? (a.setting == "s1") : (a.placement == "quantile"))
                                 ? KnotPlacement::Quantile
                                 : KnotPlacement::Equal;
        std::vector<Constraint> cons = default_constraints(cfg.model);
        if (a.fix_beta1) {
            bool have = false;
            for (const auto& c : cons)
                if (std::holds_alternative<FixBeta>(c) && std::get<FixBeta>(c).index == 0)
                    have = true;
            if (!have) cons.insert(cons.begin(), FixBeta{0, 1.0});
        }
        cfg.constraints = cons;
        cfg.fit.grad_tol = a.grad_tol;
        cfg.fit.max_iters = a.max_iters;

        StudyMetrics m = run_study(d, cfg, a.reps, workers);
        std::cout << m.design << " " << m.model << " n=" << m.n << " reps=" << m.reps_done
                  << "/" << m.reps_requested << " censoring=" << m.mean_censoring << "\n";
        for (const auto& c : m.coefs)
            std::cout << "  " << c.name << " bias=" << c.bias << " sd=" << c.emp_sd
                      << " se=" << c.mean_se << " cover=" << c.coverage << "\n";
        for (const auto& c : m.curves)
            std::cout << "  imse(" << c.name << ")=" << c.imse_mean << " (sd "
                      << c.imse_sd << ")\n";
        all.push_back(std::move(m));
    }
    if (!a.out.empty()) io::write_metrics_csv(all, a.out);
    if (!a.json_out.empty()) {
        nlohmann::json j;
        j["design"] = io::design_to_json(d);
        j["results"] = io::metrics_to_json(all);
        io::write_json(j, a.json_out);
    }
    return 0;
}

struct PredArgs {
    std::string fit_path, profiles, out = "curves.csv", grid = "0:0.02:2";
    bool no_bands = false;
};

int cmd_predict(const PredArgs& a) {
    io::LoadedFit lf = io::fit_from_json(io::read_json(a.fit_path));
    io::Profiles pr = io::read_profiles_csv(a.profiles);
    if (pr.x_names != lf.x_names || pr.z_names != lf.z_names)
        throw DataError("profile covariates do not match the fitted model");
    auto grid = io::parse_grid(a.grid);
    const bool bands = !a.no_bands && lf.cov.has_value();

    std::ofstream out(a.out);
    if (!out) throw DataError("cannot write " + a.out);
    out << (bands ? "profile,t,survival,lo,hi\n" : "profile,t,survival\n");
    for (std::size_t r = 0; r < pr.x.size(); ++r) {
        if (bands) {
            SurvivalBand sb = survival_band(lf.spec, lf.layout, lf.flat, *lf.cov,
                                            pr.x[r], pr.z[r], grid);
            for (std::size_t i = 0; i < grid.size(); ++i)
                out << r << "," << io::format_double(grid[i]) << ","
                    << io::format_double(sb.surv[i]) << "," << io::format_double(sb.lo[i])
                    << "," << io::format_double(sb.hi[i]) << "\n";
        } else {
            auto s = survival_curve(lf.spec, lf.layout, lf.flat, pr.x[r], pr.z[r], grid);
            for (std::size_t i = 0; i < grid.size(); ++i)
                out << r << "," << io::format_double(grid[i]) << ","
                    << io::format_double(s[i]) << "\n";
        }
    }
    std::cout << "wrote survival curves for " << pr.x.size() << " profiles to " << a.out
              << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"ODE-based sieve maximum likelihood for right-censored survival data"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(0, 1);

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "fit a hazard model to CSV data");
    fit_cmd->add_option("--data", fa.data_path, "input CSV")->required();
    fit_cmd->add_option("--model", fa.model, "cox|cox_tv|aft|ltm|flex")->required();
    fit_cmd->add_option("--out", fa.out, "fit artifact path");
    fit_cmd->add_option("--curves-out", fa.curves_prefix, "prefix for curve CSVs");
    fit_cmd->add_option("--grid", fa.grid, "time grid lo:step:hi for curves");
    fit_cmd->add_option("--constraints", fa.constraints,
                        "comma list: beta<k>=v, gamma0=v, g0=v (overrides defaults)");
    fit_cmd->add_option("--knots", fa.time_interior, "interior time knots");
    fit_cmd->add_option("--order", fa.time_order, "time spline order");
    fit_cmd->add_option("--g-knots", fa.g_interior, "interior g knots");
    fit_cmd->add_option("--g-order", fa.g_order, "g spline order");
    fit_cmd->add_option("--placement", fa.placement, "quantile|equal");
    fit_cmd->add_option("--gradient-mode", fa.gradient, "auto|forward|adjoint");
    fit_cmd->add_option("--info", fa.info, "opg|hessian");
    fit_cmd->add_option("--grad-tol", fa.grad_tol, "gradient sup-norm tolerance");
    fit_cmd->add_option("--max-iters", fa.max_iters, "iteration cap");
    fit_cmd->add_option("--rel-tol", fa.rel_tol, "ODE relative tolerance");
    fit_cmd->add_option("--abs-tol", fa.abs_tol, "ODE absolute tolerance");
    fit_cmd->add_option("--workers", fa.workers, "worker threads (0 = all cores)");

    SimArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "generate one synthetic dataset");
    sim_cmd->add_option("--setting", sa.setting, "s1|s2_1|s2_2|s2_3|s2_4");
    sim_cmd->add_option("--n", sa.n, "sample size");
    sim_cmd->add_option("--seed", sa.seed, "master seed");
    sim_cmd->add_option("--rep", sa.rep, "replicate index");
    sim_cmd->add_option("--censor-upper", sa.censor_upper,
                        "override the censoring upper bound");
    sim_cmd->add_option("--out", sa.out, "output CSV");
    sim_cmd->add_option("--design", sa.design_in, "design JSON to replay");
    sim_cmd->add_option("--design-out", sa.design_out, "write the design JSON");

    RepArgs ra;
    auto* rep_cmd = app.add_subcommand("replicate", "run a replication study");
    rep_cmd->add_option("--setting", ra.setting, "s1|s2_1|s2_2|s2_3|s2_4");
    rep_cmd->add_option("--n", ra.n, "sample size per replicate");
    rep_cmd->add_option("--reps", ra.reps, "number of replicates");
    rep_cmd->add_option("--seed", ra.seed, "master seed");
    rep_cmd->add_option("--models", ra.models, "comma list of model classes");
    rep_cmd->add_flag("--fix-beta1", ra.fix_beta1, "pin beta1 = 1 in every model");
    rep_cmd->add_option("--knots", ra.time_interior, "interior time knots");
    rep_cmd->add_option("--order", ra.time_order, "time spline order");
    rep_cmd->add_option("--g-knots", ra.g_interior, "interior g knots");
    rep_cmd->add_option("--g-order", ra.g_order, "g spline order");
    rep_cmd->add_option("--placement", ra.placement, "quantile|equal");
    rep_cmd->add_option("--info", ra.info, "opg|hessian");
    rep_cmd->add_option("--grad-tol", ra.grad_tol, "gradient sup-norm tolerance");
    rep_cmd->add_option("--max-iters", ra.max_iters, "iteration cap");
    rep_cmd->add_option("--out", ra.out, "metrics CSV");
    rep_cmd->add_option("--json", ra.json_out, "metrics JSON (includes the design)");
    rep_cmd->add_option("--workers", ra.workers, "worker threads (0 = all cores)");

    PredArgs pa;
    auto* pred_cmd = app.add_subcommand("predict", "survival curves from a fit artifact");
    pred_cmd->add_option("--fit", pa.fit_path, "fit JSON")->required();
    pred_cmd->add_option("--covariates", pa.profiles, "covariate profile CSV")->required();
    pred_cmd->add_option("--grid", pa.grid, "time grid lo:step:hi");
    pred_cmd->add_option("--out", pa.out, "output CSV");
    pred_cmd->add_flag("--no-bands", pa.no_bands, "point estimates only");

    std::vector<const char*> argv;
    argv.push_back("odesurv");
    for (const auto& s : args) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(fit_cmd)) return cmd_fit(fa);
        if (app.got_subcommand(sim_cmd)) return cmd_simulate(sa);
        if (app.got_subcommand(rep_cmd)) return cmd_replicate(ra);
        if (app.got_subcommand(pred_cmd)) return cmd_predict(pa);
        std::cerr << app.help() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace odesurv
