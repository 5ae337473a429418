#pragma once

#include "posl/core.hpp"

#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace posl {

struct LossRecord {
    std::string learner_id;
    SubjectId subject_id = 0;
    Time chron_time = 0;
    Time subject_time = 0;
    double loss = 0.0;    ///< unweighted
    double weight = 1.0;  ///< in [0, 1]
};

/// Lag-based loss weights: 1 for lags up to `full_weight_window`, 0 from
/// `zero_weight_cutoff` on, (1 - rate)^lag in between.
struct DecaySpec {
    int full_weight_window = 30;
    int zero_weight_cutoff = 180;
    double rate = 0.001;
};

void validate(const DecaySpec& spec);

/// weight * (y - yhat)^2
double squared_error(double y, double yhat, double weight = 1.0);

double decay_weight(Time current_m, Time loss_m, const DecaySpec& spec);

struct RiskCell {
    double weighted_loss = 0.0;
    double weight = 0.0;
};

/// Cumulative weighted validation losses per learner, stratified by subject time m.
/// Overall totals are the in-order sum of the strata, so the stratification identity is exact.
class RiskTable {
public:
    RiskTable() = default;
    explicit RiskTable(const std::vector<std::string>& learner_ids);

    Time last_updated() const noexcept { return last_updated_; }
    /// Learners in registration order.
    const std::vector<std::string>& learners() const noexcept { return order_; }
    bool contains(const std::string& learner) const { return strata_.contains(learner); }
    std::size_t registration_index(const std::string& learner) const;

    RiskCell overall(const std::string& learner) const;
    RiskCell at(const std::string& learner, Time m) const;
    const std::map<Time, RiskCell>& strata(const std::string& learner) const;

    friend RiskTable accumulate(const RiskTable& table, std::span<const LossRecord> fold_losses, Time t);

private:
    std::map<std::string, std::map<Time, RiskCell>> strata_;
    std::vector<std::string> order_;
    Time last_updated_ = std::numeric_limits<Time>::min();
};

/// Returns a new table with the losses added. Zero-weight records are dropped.
/// Throws StaleUpdate when t precedes the table's last update.
RiskTable accumulate(const RiskTable& table, std::span<const LossRecord> fold_losses, Time t);

/// Cumulative weighted loss over cumulative weight, overall or within stratum m.
/// Throws NoMass when the weight is zero.
double mean_risk(const RiskTable& table, const std::string& learner, std::optional<Time> m = std::nullopt);

/// CSV rows `t,learner,m,cum_loss,cum_weight,mean_risk` (header written when `header` is set).
void write_risks_csv(std::ostream& out, const RiskTable& table, Time t, bool header);

}  // namespace posl
