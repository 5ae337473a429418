#pragma once

#include "posl/core.hpp"

#include <Eigen/Dense>

#include <deque>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace posl {

enum class LearnerFamily { LagLinear, RidgeRls, ExpSmooth, GlobalMean };
enum class LearnerScope { Historical, Individual };

std::string to_string(LearnerFamily family);
std::string to_string(LearnerScope scope);
LearnerFamily parse_learner_family(const std::string& text);
LearnerScope parse_learner_scope(const std::string& text);

/// A candidate learner. Linear families regress y on [1, Z, X]; Historical learners
/// use the baseline X, Individual learners do not (X is constant within a subject).
struct LearnerSpec {
    std::string name;
    LearnerFamily family = LearnerFamily::GlobalMean;
    LearnerScope scope = LearnerScope::Historical;
    /// Z for the linear families; memory is the lag order.
    SummarySpec summary{SummaryKind::LagWindow, 1, false, true};
    double ridge_lambda = 0.0;
    double smoothing = 0.5;
    /// lag_linear keeps at most this many rows (0 keeps everything).
    std::size_t buffer_limit = 0;
};

void validate(const LearnerSpec& spec);
bool uses_summary(const LearnerSpec& spec) noexcept;
bool uses_baseline(const LearnerSpec& spec) noexcept;
/// Largest lag the learner reads (0 when it needs no history).
int required_history(const LearnerSpec& spec) noexcept;

/// One training or query example: subject, baseline X, summary Z(t-1), time, outcome.
struct Row {
    SubjectId subject_id = 0;
    std::vector<double> x;
    std::vector<double> z;
    Time t = 0;
    double y = 0.0;
};

/// Row for predicting y(t) from the record, or nullopt when Z(t-1) cannot be built.
std::optional<Row> make_row(const PanelRecord& record, const LearnerSpec& spec, Time t);
/// Rows for every observed t in [from, to] that has enough history.
std::vector<Row> make_rows(const PanelRecord& record, const LearnerSpec& spec, Time from, Time to);

/// A trained predictor. Values are immutable: `fit`/`update` return new states.
class FittedLearner {
public:
    const LearnerSpec& spec() const noexcept { return spec_; }
    Time trained_through() const noexcept { return trained_through_; }
    std::size_t train_count() const noexcept { return train_count_; }
    /// Set when a singular design was resolved with ridge jitter.
    bool jittered() const noexcept { return jittered_; }
    /// Coefficients over [1, Z, X] for the linear families; empty otherwise.
    const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
    std::size_t z_dim() const noexcept { return z_dim_; }
    std::size_t x_dim() const noexcept { return x_dim_; }

    friend FittedLearner fit(const LearnerSpec& spec, std::span<const Row> train);
    friend FittedLearner update(const FittedLearner& f, std::span<const Row> batch);
    friend double predict(const FittedLearner& f, std::span<const double> x, std::span<const double> z, Time t);

private:
    void absorb(std::span<const Row> rows);
    void solve();
    Eigen::VectorXd design(std::span<const double> x, std::span<const double> z) const;

    LearnerSpec spec_;
    Time trained_through_ = std::numeric_limits<Time>::min();
    std::size_t train_count_ = 0;
    std::optional<SubjectId> subject_;
    std::size_t z_dim_ = 0;
    std::size_t x_dim_ = 0;
    bool jittered_ = false;

    Eigen::MatrixXd xtx_;
    Eigen::VectorXd xty_;
    Eigen::VectorXd coef_;
    std::deque<Row> buffer_;
    double sum_y_ = 0.0;
    double level_ = 0.0;
};

/// Throws InvalidArgument on empty input, MixedSubjects when an Individual learner sees
/// more than one subject, DimensionMismatch on ragged features.
FittedLearner fit(const LearnerSpec& spec, std::span<const Row> train);
/// Absorbs rows later than `trained_through`. Throws StaleBatch otherwise.
FittedLearner update(const FittedLearner& f, std::span<const Row> batch);
double predict(const FittedLearner& f, std::span<const double> x, std::span<const double> z, Time t);
double predict(const FittedLearner& f, const Row& row);

/// h-step forecasts from the end of `record`, feeding each prediction back into the summary.
/// Future covariates W are held at their last observed value.
std::vector<double> forecast_recursive(const FittedLearner& f, const PanelRecord& record, int horizon);

/// CSV `learner,term,value` for the linear families.
void write_coefficients_csv(std::ostream& out, const std::vector<FittedLearner>& learners);

}  // namespace posl
