#include "posl/core.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace posl {

namespace {

std::string subject_tag(SubjectId id) { return "subject " + std::to_string(id); }

}  // namespace

Time PanelRecord::exit() const {
    if (exit_time) return *exit_time;
    return empty() ? entry_time : last_time();
}

bool PanelRecord::observed(Time t) const noexcept {
    return !times.empty() && t >= times.front() && t <= times.back();
}

std::size_t PanelRecord::index_of(Time t) const {
    if (!observed(t)) {
        throw Error(ErrorCode::InvalidArgument, subject_tag(subject_id) + " has no observation at t=" + std::to_string(t));
    }
    return static_cast<std::size_t>(t - times.front());
}

std::size_t PanelRecord::covariate_dim() const noexcept {
    return covariates.empty() ? 0 : covariates.front().size();
}

void PanelRecord::append(Time t, std::vector<double> w, double y) {
    if (!times.empty() && t != times.back() + 1) {
        throw Error(ErrorCode::StaleBatch, subject_tag(subject_id) + ": observation at t=" + std::to_string(t) +
                                               " does not follow t=" + std::to_string(times.back()));
    }
    if (times.empty() && t < entry_time) {
        throw Error(ErrorCode::NotYetEnrolled, subject_tag(subject_id) + ": t=" + std::to_string(t) + " precedes entry");
    }
    if (!covariates.empty() && w.size() != covariates.front().size()) {
        throw Error(ErrorCode::DimensionMismatch, subject_tag(subject_id) + ": covariate length changed");
    }
    if (exit_time && t > *exit_time) {
        throw Error(ErrorCode::DataValidation, subject_tag(subject_id) + ": observation after exit time");
    }
    times.push_back(t);
    covariates.push_back(std::move(w));
    outcomes.push_back(y);
}

void validate(const PanelRecord& r) {
    const auto fail = [&](const std::string& msg) { throw Error(ErrorCode::DataValidation, subject_tag(r.subject_id) + ": " + msg); };
    if (r.covariates.size() != r.times.size() || r.outcomes.size() != r.times.size()) {
        fail("times, covariates and outcomes differ in length");
    }
    if (r.entry_time < 0) fail("negative entry time");
    for (std::size_t k = 1; k < r.times.size(); ++k) {
        if (r.times[k] <= r.times[k - 1]) fail("times not strictly increasing");
        if (r.times[k] != r.times[k - 1] + 1) fail("gap in observations after t=" + std::to_string(r.times[k - 1]));
    }
    const std::size_t q = r.covariate_dim();
    for (const auto& w : r.covariates) {
        if (w.size() != q) fail("covariate length varies over time");
    }
    if (r.exit_time && *r.exit_time < r.entry_time) fail("exit precedes entry");
    if (!r.empty()) {
        if (r.first_time() < r.entry_time) fail("observation before entry time");
        if (r.last_time() > r.exit()) fail("observation after exit time");
    }
}

Panel::Panel(std::vector<PanelRecord> records, std::optional<Time> horizon_tau) : records_(std::move(records)) {
    std::set<SubjectId> seen;
    Time max_time = 0;
    for (const auto& r : records_) {
        validate(r);
        if (!seen.insert(r.subject_id).second) {
            throw Error(ErrorCode::DataValidation, "duplicate " + subject_tag(r.subject_id));
        }
        if (!r.empty()) max_time = std::max(max_time, r.last_time());
    }
    std::sort(records_.begin(), records_.end(),
              [](const PanelRecord& a, const PanelRecord& b) { return a.subject_id < b.subject_id; });
    horizon_tau_ = horizon_tau.value_or(max_time);
    if (horizon_tau_ < max_time) {
        throw Error(ErrorCode::DataValidation, "horizon tau=" + std::to_string(horizon_tau_) + " is before the last observation");
    }
}

const PanelRecord* Panel::find(SubjectId id) const {
    for (const auto& r : records_) {
        if (r.subject_id == id) return &r;
    }
    return nullptr;
}

const PanelRecord& Panel::at(SubjectId id) const {
    if (const auto* r = find(id)) return *r;
    throw Error(ErrorCode::InvalidArgument, "unknown " + subject_tag(id));
}

std::vector<SubjectId> Panel::ids() const {
    std::vector<SubjectId> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.subject_id);
    return out;
}

std::size_t summary_length(const SummarySpec& spec, std::size_t covariate_dim, std::size_t baseline_dim) {
    const std::size_t per_obs = spec.y_only ? 1 : covariate_dim + 1;
    const std::size_t lags = spec.kind == SummaryKind::LagWindow ? static_cast<std::size_t>(spec.memory) : 1;
    return per_obs * lags + (spec.include_baseline ? baseline_dim : 0);
}

SummaryVector make_summary(const PanelRecord& record, const SummarySpec& spec, Time t) {
    if (spec.memory < 1) throw Error(ErrorCode::InvalidArgument, "summary memory must be >= 1");

    SummaryVector out;
    out.subject_id = record.subject_id;
    out.as_of_time = t - 1;

    // Observations strictly before t, ending exactly at t-1.
    const bool has_prev = !record.empty() && record.observed(t - 1);
    const std::size_t available = has_prev ? record.index_of(t - 1) + 1 : 0;
    const std::size_t needed = spec.kind == SummaryKind::LagWindow ? static_cast<std::size_t>(spec.memory) : 1;
    if (available < needed) {
        throw Error(ErrorCode::InsufficientHistory, subject_tag(record.subject_id) + " has " + std::to_string(available) +
                                                        " observations before t=" + std::to_string(t) + ", needs " +
                                                        std::to_string(needed));
    }

    const std::size_t q = record.covariate_dim();
    out.values.reserve(summary_length(spec, q, record.baseline.size()));
    if (spec.kind == SummaryKind::LagWindow) {
        for (std::size_t k = available - needed; k < available; ++k) {
            if (!spec.y_only) out.values.insert(out.values.end(), record.covariates[k].begin(), record.covariates[k].end());
            out.values.push_back(record.outcomes[k]);
        }
    } else {
        std::vector<double> sums(spec.y_only ? 1 : q + 1, 0.0);
        for (std::size_t k = 0; k < available; ++k) {
            if (!spec.y_only) {
                for (std::size_t j = 0; j < q; ++j) sums[j] += record.covariates[k][j];
            }
            sums.back() += record.outcomes[k];
        }
        for (double s : sums) out.values.push_back(s / static_cast<double>(available));
    }
    if (spec.include_baseline) out.values.insert(out.values.end(), record.baseline.begin(), record.baseline.end());

    for (double v : out.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, subject_tag(record.subject_id) + ": non-finite summary");
    }
    return out;
}

Time chron_to_subject_time(Time entry, Time t) {
    if (t < entry) {
        throw Error(ErrorCode::NotYetEnrolled, "t=" + std::to_string(t) + " precedes entry " + std::to_string(entry));
    }
    return t - entry;
}

std::set<SubjectId> active_set(const Panel& panel, Time t) {
    std::set<SubjectId> out;
    for (const auto& r : panel.records()) {
        if (r.entry_time <= t && t <= r.exit()) out.insert(r.subject_id);
    }
    return out;
}

EnrollmentCounts enrollment_counts(const Panel& panel, Time t) {
    EnrollmentCounts out;
    for (const auto& r : panel.records()) {
        if (r.entry_time <= t) ++out.n_of_t;
        for (Time s : r.times) {
            if (s > t) break;
            ++out.n_m_of_t[s - r.entry_time];
        }
    }
    return out;
}

}  // namespace posl
