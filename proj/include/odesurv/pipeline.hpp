#pragma once

// End-to-end fit assembly shared by the CLI and the replication driver:
// knot construction from the data, model-class defaults, warm start for
// specs with a g basis, the fit itself, and information-matrix inference.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "odesurv/inference.hpp"
#include "odesurv/model.hpp"
#include "odesurv/optimize.hpp"

namespace odesurv {

enum class ModelClass { Cox, CoxTv, Aft, Ltm, Flex };

std::string to_string(ModelClass m);
ModelClass model_class_from_string(const std::string& s);

struct ModelConfig {
    ModelClass model = ModelClass::Cox;
    int time_interior = 6;
    int time_order = 4;
    KnotPlacement time_placement = KnotPlacement::Quantile;
    int g_interior = 6;
    int g_order = 4;
    // equal spacing on [0, lam_max] is the classical recipe; quantile
    // placement puts interior knots at quantiles of the warm-start
    // cumulative hazards, which keeps every segment identified when the
    // hazard mass is concentrated near zero
    KnotPlacement g_placement = KnotPlacement::Equal;
    // the g domain ends at this quantile of the warm-start cumulative
    // hazards rather than at their maximum; fitted hazards have an
    // exponential-like upper tail, so the literal maximum leaves the top
    // basis coefficients supported by a handful of observations, which
    // makes them unidentified and the optimum numerically unreachable.
    // 1.0 restores the classical choice; trajectories beyond the domain
    // use the linear basis extension, whose slope the data below it pins.
    double g_domain_quantile = 0.90;
    // nullopt -> class defaults (ltm/flex: beta_1 = 1 and g(0) = 0).
    std::optional<std::vector<Constraint>> constraints;
    GradientMode gradient_mode = GradientMode::Auto;
    InfoEstimator info = InfoEstimator::Opg;
    FitOptions fit;
};

std::vector<Constraint> default_constraints(ModelClass m);

// Spec assembly without fitting (knots from the data; g domain needs
// lam_max, so specs with g are only complete after the warm start).
// lam_values: warm-start cumulative hazards for quantile g placement
// (ignored when empty or when g_placement is Equal).
ModelSpec build_spec(const Dataset& data, const ModelConfig& cfg, double lam_max,
                     std::span<const double> lam_values = {});

struct PipelineResult {
    ModelSpec spec;
    ParamLayout layout;
    FitResult fit;
    Eigen::MatrixXd info;
    Eigen::MatrixXd cov;
    double cov_condition = 0;
    std::vector<double> se, ci_lo, ci_hi;  // free coordinates
    double lam_max = 0;                    // from the warm start, 0 without g
    InfoEstimator info_estimator = InfoEstimator::Opg;
};

PipelineResult run_fit_pipeline(const Dataset& data, const ModelConfig& cfg, int workers);

}  // namespace odesurv
