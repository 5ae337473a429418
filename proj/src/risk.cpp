#include "posl/risk.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace posl {

void validate(const DecaySpec& spec) {
    if (spec.full_weight_window < 0) throw Error(ErrorCode::InvalidArgument, "decay full_weight_window must be >= 0");
    if (spec.full_weight_window >= spec.zero_weight_cutoff) {
        throw Error(ErrorCode::InvalidArgument, "decay full_weight_window must be below zero_weight_cutoff");
    }
    if (!(spec.rate > 0.0 && spec.rate < 1.0)) throw Error(ErrorCode::InvalidArgument, "decay rate must lie in (0, 1)");
}

double squared_error(double y, double yhat, double weight) {
    if (weight < 0.0) throw Error(ErrorCode::InvalidArgument, "loss weight must be >= 0");
    const double r = y - yhat;
    return weight * r * r;
}

double decay_weight(Time current_m, Time loss_m, const DecaySpec& spec) {
    if (loss_m > current_m) {
        throw Error(ErrorCode::InvalidArgument, "loss time " + std::to_string(loss_m) + " is after current time " +
                                                    std::to_string(current_m));
    }
    const Time lag = current_m - loss_m;
    if (lag >= spec.zero_weight_cutoff) return 0.0;
    if (lag <= spec.full_weight_window) return 1.0;
    return std::pow(1.0 - spec.rate, static_cast<double>(lag));
}

RiskTable::RiskTable(const std::vector<std::string>& learner_ids) {
    for (const auto& id : learner_ids) {
        if (strata_.emplace(id, std::map<Time, RiskCell>{}).second) order_.push_back(id);
    }
}

std::size_t RiskTable::registration_index(const std::string& learner) const {
    const auto it = std::find(order_.begin(), order_.end(), learner);
    if (it == order_.end()) throw Error(ErrorCode::InvalidArgument, "unknown learner '" + learner + "'");
    return static_cast<std::size_t>(it - order_.begin());
}

const std::map<Time, RiskCell>& RiskTable::strata(const std::string& learner) const {
    const auto it = strata_.find(learner);
    if (it == strata_.end()) throw Error(ErrorCode::InvalidArgument, "unknown learner '" + learner + "'");
    return it->second;
}

RiskCell RiskTable::overall(const std::string& learner) const {
    RiskCell total;
    for (const auto& [m, cell] : strata(learner)) {
        total.weighted_loss += cell.weighted_loss;
        total.weight += cell.weight;
    }
    return total;
}

RiskCell RiskTable::at(const std::string& learner, Time m) const {
    const auto& s = strata(learner);
    const auto it = s.find(m);
    return it == s.end() ? RiskCell{} : it->second;
}

RiskTable accumulate(const RiskTable& table, std::span<const LossRecord> fold_losses, Time t) {
    if (t < table.last_updated_) {
        throw Error(ErrorCode::StaleUpdate, "update at t=" + std::to_string(t) + " after t=" +
                                                std::to_string(table.last_updated_));
    }
    RiskTable next = table;
    for (const auto& rec : fold_losses) {
        if (!(rec.loss >= 0.0) || !std::isfinite(rec.loss)) {
            throw Error(ErrorCode::InvalidArgument, "loss must be finite and non-negative");
        }
        if (!(rec.weight >= 0.0 && rec.weight <= 1.0)) throw Error(ErrorCode::InvalidArgument, "loss weight outside [0, 1]");
        if (rec.weight == 0.0) continue;
        auto [it, inserted] = next.strata_.try_emplace(rec.learner_id);
        if (inserted) next.order_.push_back(rec.learner_id);
        auto& cell = it->second[rec.subject_time];
        cell.weighted_loss += rec.weight * rec.loss;
        cell.weight += rec.weight;
    }
    next.last_updated_ = t;
    return next;
}

double mean_risk(const RiskTable& table, const std::string& learner, std::optional<Time> m) {
    const RiskCell cell = m ? table.at(learner, *m) : table.overall(learner);
    if (!(cell.weight > 0.0)) {
        throw Error(ErrorCode::NoMass, "learner '" + learner + "' has no loss mass" +
                                           (m ? " at m=" + std::to_string(*m) : std::string()));
    }
    return cell.weighted_loss / cell.weight;
}

void write_risks_csv(std::ostream& out, const RiskTable& table, Time t, bool header) {
    if (header) out << "t,learner,m,cum_loss,cum_weight,mean_risk\n";
    out.precision(17);
    const auto row = [&](const std::string& learner, const std::string& m, const RiskCell& c) {
        out << t << ',' << learner << ',' << m << ',' << c.weighted_loss << ',' << c.weight << ',';
        if (c.weight > 0.0) out << c.weighted_loss / c.weight;
        out << '\n';
    };
    for (const auto& learner : table.learners()) {
        row(learner, "", table.overall(learner));
        for (const auto& [m, cell] : table.strata(learner)) row(learner, std::to_string(m), cell);
    }
}

}  // namespace posl
