#pragma once

#include "posl/core.hpp"
#include "posl/cv.hpp"
#include "posl/learners.hpp"
#include "posl/risk.hpp"
#include "posl/selector.hpp"
#include "posl/simgen.hpp"

#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace posl {

/// Default candidate library: three Historical and four Individual learners.
std::vector<LearnerSpec> default_library();

struct EngineConfig {
    /// Chronological times at which Historical learners are refit on pooled data through the clock.
    std::vector<Time> historical_refresh_times{0};
    int batch_size = 5;
    /// Subject-time history an Individual learner needs before it forecasts and enters selection.
    int warmup = 60;
    int forecast_horizon = 5;
    FoldSpec fold_spec{};
    std::optional<DecaySpec> decay;
    WeightMode mode = WeightMode::Convex;
    bool per_m_selection = false;
    ConditionalConfig conditional{};
    std::vector<LearnerSpec> learners = default_library();
    /// Also registers "historical_sl" and "individual_sl": the convex ensemble of each group,
    /// refit every step, competing as single candidates.
    bool group_candidates = false;
};

inline constexpr const char* kHistoricalGroup = "historical_sl";
inline constexpr const char* kIndividualGroup = "individual_sl";

/// Throws InvalidArgument naming the offending field.
void validate(const EngineConfig& config);

struct Observation {
    SubjectId id = 0;
    Time t = 0;
    std::vector<double> w;
    double y = 0.0;
};

struct ForecastRow {
    SubjectId id = 0;
    Time origin = 0;  ///< clock when the forecast was made
    int step = 0;     ///< 1..horizon
    double yhat = 0.0;
    Time t() const noexcept { return origin + step; }
};

/// One scored validation point. `preds` follows Engine::learner_ids(); NaN marks a learner
/// that had no fit for the point's fold.
struct ValidationEntry {
    Time scored_at = 0;
    SubjectId id = 0;
    Time t = 0;
    Time m = 0;
    std::vector<double> x;
    std::vector<double> preds;
    double y = 0.0;
    /// Combination of `preds` under the weights in force before the step that scored it.
    double ensemble = std::numeric_limits<double>::quiet_NaN();
};

struct StepRecord {
    Time t = 0;
    EnsembleWeights weights;
    /// Argmin of mean CV risk over the step's candidates, whatever the weighting mode.
    std::optional<std::string> discrete_choice;
    bool individuals_selected = false;
};

struct StepOutput {
    Time t = 0;
    std::vector<ForecastRow> forecasts;
    EnsembleWeights weights;
    std::vector<std::string> diagnostics;
};

/// Streaming orchestration: one instance per run, steps applied in order.
class Engine {
public:
    /// Fits Historical learners on the historical panel. Targets are shells (id, baseline,
    /// entry, exit) without observations; their data arrives through `step`.
    Engine(Panel historical, std::vector<PanelRecord> targets, EngineConfig config);

    /// Appends the batch, advances the clock to `until` (default: the batch's last time),
    /// scores new folds, refreshes and updates learners, reweights and forecasts.
    StepOutput step(const std::vector<Observation>& batch, std::optional<Time> until = std::nullopt);

    Time clock() const noexcept { return clock_; }
    const EngineConfig& config() const noexcept { return config_; }
    const std::vector<std::string>& learner_ids() const noexcept { return ids_; }
    bool is_individual(std::size_t k) const;
    /// True for the group ensembles registered after the configured learners.
    bool is_group(std::size_t k) const noexcept { return k >= config_.learners.size(); }
    const RiskTable& risk_table() const noexcept { return table_; }
    const EnsembleWeights& weights() const noexcept { return weights_; }
    const std::vector<StepRecord>& history() const noexcept { return history_; }
    const std::vector<ValidationEntry>& validation_log() const noexcept { return log_; }
    const std::vector<PanelRecord>& targets() const noexcept { return targets_; }
    Panel target_panel() const;
    /// Historical learners currently used for forecasting.
    const std::vector<std::optional<FittedLearner>>& historical_fits() const { return versions_.back().fits; }
    std::size_t refresh_count() const noexcept { return versions_.size(); }

    /// Weight mass on Individual learners.
    double individual_mass(const EnsembleWeights& w) const;

private:
    struct Version {
        Time cutoff = 0;
        std::vector<std::optional<FittedLearner>> fits;  ///< indexed like learner_ids(); Individual slots empty
    };

    std::size_t target_index(SubjectId id) const;
    void refresh_historical(std::vector<std::string>& diagnostics);
    void score_new_folds(std::vector<std::string>& diagnostics);
    void update_individuals(std::vector<std::string>& diagnostics);
    void rebuild_risk(const std::vector<LossRecord>& fresh);
    double point_weight(SubjectId id, Time m) const;
    Time current_subject_time(const PanelRecord& r) const;
    EnsembleWeights select(const std::vector<std::size_t>& candidates, std::optional<Time> m) const;
    std::vector<std::size_t> candidates() const;
    void reweight();
    std::vector<ForecastRow> forecast(std::vector<std::string>& diagnostics) const;
    std::vector<double> available_weights(const EnsembleWeights& w, const std::vector<bool>& available,
                                          std::span<const double> x) const;
    std::vector<std::size_t> group_members(std::size_t g) const;
    void refit_groups();
    /// Group combination of member values (NaN marks a missing member); NaN when none is present.
    double group_value(std::size_t g, const std::vector<double>& values) const;

    EngineConfig config_;
    Panel historical_;
    std::vector<PanelRecord> targets_;
    std::vector<std::string> ids_;
    Time clock_ = 0;

    std::vector<Version> versions_;
    /// Per target: forecasting fits and rolling-origin CV fits for Individual learners.
    std::vector<std::vector<std::optional<FittedLearner>>> individual_;
    std::vector<std::vector<std::optional<FittedLearner>>> individual_cv_;
    std::set<std::tuple<SubjectId, int, int>> scored_;

    std::vector<LossRecord> losses_;  ///< retained for decay reweighting
    RiskTable table_;
    EnsembleWeights weights_;
    std::map<Time, EnsembleWeights> weights_by_m_;
    /// Member weights per group ensemble, indexed like learner_ids().
    std::map<std::size_t, std::vector<double>> group_alpha_;
    std::vector<ValidationEntry> log_;
    std::vector<StepRecord> history_;
};

/// Splits a record into consecutive batches of `batch_size` observations.
std::vector<std::vector<Observation>> make_batches(const PanelRecord& record, int batch_size);

struct OracleStep {
    Time t = 0;
    std::vector<double> d0;  ///< per learner, NaN without points
    double ensemble_d0 = std::numeric_limits<double>::quiet_NaN();
    std::string oracle;
    std::string selected;
    double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct OracleReport {
    std::vector<std::string> learners;
    std::vector<OracleStep> steps;
};

/// d0 per learner at each step: mean squared distance between the fold-wise predictions and
/// the true conditional mean over the validation points scored so far, weighted by the loss
/// weights in force at that step (all 1 without decay). Steps without a selected learner are skipped. Throws MissingTruth when a point has no psi0.
OracleReport oracle_eval(const Engine& engine, const TruthTrace& truth);

void write_forecasts_csv(std::ostream& out, const std::vector<ForecastRow>& rows, const Panel* actual, bool header);
/// `t,learner,d0,ensemble_d0,oracle,selected,ratio`
void write_oracle_csv(std::ostream& out, const OracleReport& report);

}  // namespace posl
