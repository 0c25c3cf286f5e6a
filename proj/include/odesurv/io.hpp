#pragma once

// Dataset CSV and JSON artifact serialization.  CSV schema:
// time,status,x:<name>,...,z:<name>,... with numbers at full double
// precision (%.17g) on write.

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "odesurv/model.hpp"
#include "odesurv/pipeline.hpp"
#include "odesurv/simulate.hpp"

namespace odesurv::io {

Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

// Covariate profiles for prediction: header x:<name>,... ,z:<name>,...
// matching the fitted model's covariates, one profile per row.
struct Profiles {
    std::vector<std::string> x_names, z_names;
    std::vector<std::vector<double>> x, z;  // per row
};
Profiles read_profiles_csv(const std::string& path);

std::string format_double(double v);  // %.17g

// Fit artifact: spec, estimates, free-coordinate table with SEs and CIs,
// covariance, convergence metadata, version string.
nlohmann::json fit_to_json(const Dataset& data, const ModelConfig& cfg,
                           const PipelineResult& res);
void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);

struct LoadedFit {
    ModelClass model = ModelClass::Cox;
    ModelSpec spec;
    ParamLayout layout;
    Parameters params;
    std::vector<double> flat;
    std::optional<Eigen::MatrixXd> cov;
    std::vector<std::string> x_names, z_names;
};
LoadedFit fit_from_json(const nlohmann::json& j);

nlohmann::json design_to_json(const StudyDesign& d);
StudyDesign design_from_json(const nlohmann::json& j);

nlohmann::json metrics_to_json(const std::vector<StudyMetrics>& ms);
void write_metrics_csv(const std::vector<StudyMetrics>& ms, const std::string& path);

// "lo:step:hi" inclusive of hi up to rounding slack.
std::vector<double> parse_grid(const std::string& s);

}  // namespace odesurv::io
