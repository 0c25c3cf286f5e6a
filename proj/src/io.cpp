#include "odesurv/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "odesurv/version.hpp"

namespace odesurv::io {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw DataError("could not parse number '" + s + "' in " + where);
    }
}

json knots_to_json(const KnotVector& kv) {
    return json{{"order", kv.order()},
                {"domain", {kv.a(), kv.b()}},
                {"interior", kv.interior()}};
}

KnotVector knots_from_json(const json& j) {
    std::vector<double> interior = j.at("interior").get<std::vector<double>>();
    auto dom = j.at("domain");
    return KnotVector::explicit_knots(dom.at(0).get<double>(), dom.at(1).get<double>(),
                                      std::move(interior), j.at("order").get<int>());
}

json constraint_to_json(const Constraint& c) {
    if (std::holds_alternative<FixBeta>(c)) {
        const auto& fb = std::get<FixBeta>(c);
        return json{{"type", "fix_beta"}, {"index", fb.index}, {"value", fb.value}};
    }
    const auto& fs = std::get<FixSplineLeft>(c);
    const char* target = fs.target == SplineTarget::Gamma ? "gamma"
                         : fs.target == SplineTarget::Eta ? "eta"
                                                          : "g";
    return json{{"type", "fix_spline_left"},
                {"target", target},
                {"eta_index", fs.eta_index},
                {"value", fs.value}};
}

Constraint constraint_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "fix_beta")
        return FixBeta{j.at("index").get<int>(), j.at("value").get<double>()};
    if (type != "fix_spline_left") throw DataError("unknown constraint type " + type);
    const std::string target = j.at("target").get<std::string>();
    FixSplineLeft fs;
    fs.eta_index = j.value("eta_index", 0);
    fs.value = j.at("value").get<double>();
    if (target == "gamma") fs.target = SplineTarget::Gamma;
    else if (target == "eta") fs.target = SplineTarget::Eta;
    else if (target == "g") fs.target = SplineTarget::G;
    else throw DataError("unknown spline constraint target " + target);
    return fs;
}

const char* gradient_mode_name(GradientMode m) {
    switch (m) {
        case GradientMode::Forward: return "forward";
        case GradientMode::Adjoint: return "adjoint";
        default: return "auto";
    }
}

GradientMode gradient_mode_from(const std::string& s) {
    if (s == "forward") return GradientMode::Forward;
    if (s == "adjoint") return GradientMode::Adjoint;
    if (s == "auto") return GradientMode::Auto;
    throw DataError("unknown gradient mode " + s);
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + " is empty");
    auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "time" || header[1] != "status")
        throw DataError(path + ": header must start with time,status");
    Dataset data;
    std::vector<int> kind;  // 0 = x, 1 = z
    for (std::size_t c = 2; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h.rfind("x:", 0) == 0) {
            data.x_names.push_back(h.substr(2));
            kind.push_back(0);
        } else if (h.rfind("z:", 0) == 0) {
            data.z_names.push_back(h.substr(2));
            kind.push_back(1);
        } else {
            throw DataError(path + ": covariate columns must be x:<name> or z:<name>");
        }
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": wrong column count");
        Observation o;
        const std::string where = path + ":" + std::to_string(lineno);
        o.y = parse_num(cells[0], where);
        double st = parse_num(cells[1], where);
        if (st != 0.0 && st != 1.0)
            throw DataError(where + ": status must be 0 or 1");
        o.delta = static_cast<int>(st);
        for (std::size_t c = 2; c < cells.size(); ++c) {
            double v = parse_num(cells[c], where);
            if (kind[c - 2] == 0) o.x.push_back(v);
            else o.z.push_back(v);
        }
        data.obs.push_back(std::move(o));
    }
    data.validate();
    return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "time,status";
    for (const auto& n : data.x_names) out << ",x:" << n;
    for (const auto& n : data.z_names) out << ",z:" << n;
    out << "\n";
    for (const auto& o : data.obs) {
        out << format_double(o.y) << "," << o.delta;
        for (double v : o.x) out << "," << format_double(v);
        for (double v : o.z) out << "," << format_double(v);
        out << "\n";
    }
}

Profiles read_profiles_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + " is empty");
    auto header = split(line, ',');
    Profiles pr;
    std::vector<int> kind;
    for (const auto& h : header) {
        if (h.rfind("x:", 0) == 0) {
            pr.x_names.push_back(h.substr(2));
            kind.push_back(0);
        } else if (h.rfind("z:", 0) == 0) {
            pr.z_names.push_back(h.substr(2));
            kind.push_back(1);
        } else {
            throw DataError(path + ": profile columns must be x:<name> or z:<name>");
        }
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": wrong column count");
        std::vector<double> xrow, zrow;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = parse_num(cells[c], path + ":" + std::to_string(lineno));
            if (kind[c] == 0) xrow.push_back(v);
            else zrow.push_back(v);
        }
        pr.x.push_back(std::move(xrow));
        pr.z.push_back(std::move(zrow));
    }
    return pr;
}

json fit_to_json(const Dataset& data, const ModelConfig& cfg, const PipelineResult& res) {
    json spec_j;
    if (res.spec.time_knots) spec_j["time_knots"] = knots_to_json(*res.spec.time_knots);
    else spec_j["time_knots"] = nullptr;
    spec_j["gamma_active"] = res.spec.gamma_active;
    spec_j["eta_active"] = json::array();
    for (auto e : res.spec.eta_active) spec_j["eta_active"].push_back(e != 0);
    if (res.spec.g_knots) spec_j["g_knots"] = knots_to_json(*res.spec.g_knots);
    else spec_j["g_knots"] = nullptr;
    spec_j["constraints"] = json::array();
    for (const auto& c : res.spec.constraints)
        spec_j["constraints"].push_back(constraint_to_json(c));
    spec_j["gradient_mode"] = gradient_mode_name(res.spec.gradient_mode);

    json est;
    est["beta"] = res.fit.theta_hat.beta;
    est["a"] = res.fit.theta_hat.a;
    est["b"] = res.fit.theta_hat.b;

    const int P = res.layout.n_free;
    json cov = json::array();
    for (int i = 0; i < P; ++i) {
        json row = json::array();
        for (int j = 0; j < P; ++j) row.push_back(res.cov(i, j));
        cov.push_back(std::move(row));
    }

    json j;
    j["version"] = kVersion;
    j["model"] = to_string(cfg.model);
    j["data"] = {{"n", data.n()},
                 {"events", data.n_events()},
                 {"x", data.x_names},
                 {"z", data.z_names}};
    j["spec"] = std::move(spec_j);
    j["estimates"] = std::move(est);
    j["free"] = {{"names", res.layout.names},
                 {"values", res.fit.flat_hat},
                 {"se", res.se},
                 {"ci_lower", res.ci_lo},
                 {"ci_upper", res.ci_hi}};
    j["loglik"] = res.fit.loglik;
    j["converged"] = res.fit.converged;
    j["iterations"] = res.fit.iters;
    j["grad_norm"] = res.fit.grad_norm;
    j["warm_start_fallback"] = res.fit.warm_start_fallback;
    j["lam_max"] = res.lam_max;
    j["info_estimator"] = cfg.info == InfoEstimator::Opg ? "opg" : "hessian";
    j["cov_condition"] = res.cov_condition;
    j["covariance"] = std::move(cov);
    return j;
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return j;
}

LoadedFit fit_from_json(const json& j) {
    LoadedFit lf;
    try {
        lf.model = model_class_from_string(j.at("model").get<std::string>());
        const auto& spec_j = j.at("spec");
        if (!spec_j.at("time_knots").is_null())
            lf.spec.time_knots = knots_from_json(spec_j.at("time_knots"));
        lf.spec.gamma_active = spec_j.at("gamma_active").get<bool>();
        for (const auto& e : spec_j.at("eta_active"))
            lf.spec.eta_active.push_back(e.get<bool>() ? 1 : 0);
        if (!spec_j.at("g_knots").is_null())
            lf.spec.g_knots = knots_from_json(spec_j.at("g_knots"));
        for (const auto& c : spec_j.at("constraints"))
            lf.spec.constraints.push_back(constraint_from_json(c));
        lf.spec.gradient_mode =
            gradient_mode_from(spec_j.value("gradient_mode", "auto"));

        lf.x_names = j.at("data").at("x").get<std::vector<std::string>>();
        lf.z_names = j.at("data").at("z").get<std::vector<std::string>>();
        lf.layout = make_layout(lf.spec, static_cast<int>(lf.x_names.size()),
                                lf.x_names, lf.z_names);

        const auto& est = j.at("estimates");
        lf.params.beta = est.at("beta").get<std::vector<double>>();
        lf.params.a = est.at("a").get<std::vector<std::vector<double>>>();
        lf.params.b = est.at("b").get<std::vector<double>>();
        lf.flat = lf.layout.pack(lf.params);

        if (j.contains("covariance") && j.at("covariance").is_array()) {
            const auto& cj = j.at("covariance");
            const int P = static_cast<int>(cj.size());
            if (P == lf.layout.n_free) {
                Eigen::MatrixXd cov(P, P);
                for (int r = 0; r < P; ++r)
                    for (int c = 0; c < P; ++c) cov(r, c) = cj.at(r).at(c).get<double>();
                lf.cov = std::move(cov);
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed fit artifact: ") + e.what());
    }
    return lf;
}

json design_to_json(const StudyDesign& d) {
    json j;
    j["version"] = kVersion;
    j["name"] = d.name;
    j["n"] = d.n;
    j["seed"] = d.seed;
    j["beta"] = d.beta;
    j["censor_upper"] = d.censor_upper;
    j["t_max"] = d.t_max;
    if (d.id == DesignId::S1) {
        j["covariates"] = "5-dim standard normal, AR(1) correlation rho=0.5; "
                          "x1..x4 proportional, x5 time-interacted";
        j["truth"] = {{"alpha", "0.5"}, {"q", "1"}, {"eta", "sin(3*pi*t/4) on x5"}};
        j["censoring"] = "U(0,3), about 50%";
    } else {
        j["covariates"] = "(x1,x2) bivariate normal var 0.5 cov 0.2, x3 Bernoulli(0.5)";
        const char* alpha = d.id == DesignId::S2_1   ? "t^3"
                            : d.id == DesignId::S2_2 ? "1"
                            : d.id == DesignId::S2_3 ? "log(1+t)"
                                                     : "1+cos(pi*t+1)";
        const char* q = (d.id == DesignId::S2_1)   ? "1"
                        : (d.id == DesignId::S2_2) ? "2/(1+u)"
                                                   : "log(1+u)+2";
        j["truth"] = {{"alpha", alpha}, {"q", q}};
        j["censoring"] = "U(0, censor_upper), calibrated to 20-30%";
    }
    return j;
}

StudyDesign design_from_json(const json& j) {
    try {
        StudyDesign d = make_design(j.at("name").get<std::string>(),
                                    j.at("n").get<int>(),
                                    j.at("seed").get<std::uint64_t>(),
                                    j.value("censor_upper", 0.0));
        if (j.contains("t_max")) d.t_max = j.at("t_max").get<double>();
        return d;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed design document: ") + e.what());
    }
}

json metrics_to_json(const std::vector<StudyMetrics>& ms) {
    json out = json::array();
    for (const auto& m : ms) {
        json j;
        j["version"] = kVersion;
        j["design"] = m.design;
        j["model"] = m.model;
        j["n"] = m.n;
        j["reps_requested"] = m.reps_requested;
        j["reps_done"] = m.reps_done;
        j["failures"] = m.failures;
        j["mean_censoring"] = m.mean_censoring;
        j["coefficients"] = json::array();
        for (const auto& c : m.coefs)
            j["coefficients"].push_back({{"name", c.name},
                                         {"truth", c.truth},
                                         {"mean_est", c.mean_est},
                                         {"bias", c.bias},
                                         {"emp_sd", c.emp_sd},
                                         {"mean_se", c.mean_se},
                                         {"coverage", c.coverage}});
        j["curves"] = json::array();
        for (const auto& c : m.curves)
            j["curves"].push_back({{"name", c.name},
                                   {"imse_mean", c.imse_mean},
                                   {"imse_sd", c.imse_sd}});
        out.push_back(std::move(j));
    }
    return out;
}

void write_metrics_csv(const std::vector<StudyMetrics>& ms, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "design,model,n,reps_done,failures,kind,name,truth,bias,emp_sd,mean_se,"
           "coverage,imse_mean,imse_sd,mean_censoring\n";
    for (const auto& m : ms) {
        for (const auto& c : m.coefs) {
            out << m.design << "," << m.model << "," << m.n << "," << m.reps_done << ","
                << m.failures << ",coef," << c.name << "," << format_double(c.truth)
                << "," << format_double(c.bias) << "," << format_double(c.emp_sd) << ","
                << format_double(c.mean_se) << "," << format_double(c.coverage)
                << ",,," << format_double(m.mean_censoring) << "\n";
        }
        for (const auto& c : m.curves) {
            out << m.design << "," << m.model << "," << m.n << "," << m.reps_done << ","
                << m.failures << ",curve," << c.name << ",,,,,,"
                << format_double(c.imse_mean) << "," << format_double(c.imse_sd) << ","
                << format_double(m.mean_censoring) << "\n";
        }
    }
}

std::vector<double> parse_grid(const std::string& s) {
    auto parts = split(s, ':');
    if (parts.size() != 3) throw DataError("grid must be lo:step:hi");
    double lo = parse_num(parts[0], "grid");
    double step = parse_num(parts[1], "grid");
    double hi = parse_num(parts[2], "grid");
    if (!(step > 0) || hi < lo) throw DataError("bad grid bounds");
    std::vector<double> g;
    for (double t = lo; t <= hi + 1e-9 * step; t += step) g.push_back(t);
    return g;
}

}  // namespace odesurv::io
