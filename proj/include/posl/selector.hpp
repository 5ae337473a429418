#pragma once

#include "posl/core.hpp"
#include "posl/risk.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace posl {

enum class WeightMode { Discrete, Convex, Conditional };

std::string to_string(WeightMode mode);
WeightMode parse_weight_mode(const std::string& text);

/// Simplex weights over named learners. In conditional mode the weights are a softmax of
/// a per-learner linear form in the (standardized) baseline covariates.
struct EnsembleWeights {
    WeightMode mode = WeightMode::Convex;
    std::vector<std::string> learners;
    std::vector<double> alpha;
    Eigen::MatrixXd beta;  ///< learners x (1 + p), conditional mode only
    std::vector<double> x_center;
    std::vector<double> x_scale;

    /// Weights at baseline X; X is ignored outside conditional mode.
    std::vector<double> alpha_at(std::span<const double> x) const;
    double weight_of(const std::string& learner) const;
};

EnsembleWeights one_hot(const std::vector<std::string>& learners, const std::string& chosen);
EnsembleWeights uniform(const std::vector<std::string>& learners);

struct MetaRow {
    SubjectId subject_id = 0;
    Time t = 0;
    Time m = 0;
    std::vector<double> x;
    std::vector<double> preds;  ///< one per learner in MetaDesign::learners
    double y = 0.0;
    double weight = 1.0;
};

struct MetaDesign {
    std::vector<std::string> learners;
    std::vector<MetaRow> rows;
};

/// Argmin of mean risk (overall, or within stratum m) among `candidates` (all learners when
/// empty). Differences below 1e-12 resolve to the earlier registered learner. Throws NoMass.
std::string discrete_select(const RiskTable& table, std::optional<Time> m = std::nullopt,
                            std::span<const std::string> candidates = {});

/// Weighted least-squares objective sum_r w_r (y_r - preds_r . alpha)^2.
double meta_objective(const MetaDesign& design, std::span<const double> alpha);

/// Exact minimizer of the weighted squared error over the probability simplex.
/// Throws DegenerateDesign when no row carries weight.
EnsembleWeights nnls_weights(const MetaDesign& design);

struct ConditionalConfig {
    int iterations = 500;
    double step = 0.01;
};

/// First-order descent on the softmax parameters starting from beta = 0 (uniform weights).
/// A step that would raise the objective is rejected and the step size halved.
EnsembleWeights fit_conditional(const MetaDesign& design, const ConditionalConfig& config = {});

/// Objective of a conditional weight function over the design, normalized by total weight.
double conditional_objective(const MetaDesign& design, const EnsembleWeights& weights);

double combine(const EnsembleWeights& weights, std::span<const double> preds, std::span<const double> x = {});

/// CSV rows `t,learner,weight`.
void write_weights_csv(std::ostream& out, const EnsembleWeights& weights, Time t, std::span<const double> x, bool header);

}  // namespace posl
