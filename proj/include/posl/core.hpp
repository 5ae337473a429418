#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace posl {

using SubjectId = std::int64_t;
/// Integer time stamp on the global chronological grid.
using Time = std::int64_t;

/// One subject's baseline covariates and its contiguous stream of (W(t), Y(t)).
///
/// Records are contiguous on their observed range: `times` increases by exactly one
/// between consecutive entries. Subject time is chronological time shifted by
/// `entry_time`.
struct PanelRecord {
    SubjectId subject_id = 0;
    std::vector<double> baseline;
    std::vector<Time> times;
    std::vector<std::vector<double>> covariates;
    std::vector<double> outcomes;
    Time entry_time = 0;
    /// Unset means "last observed time".
    std::optional<Time> exit_time;

    std::size_t size() const noexcept { return times.size(); }
    bool empty() const noexcept { return times.empty(); }
    Time first_time() const { return times.front(); }
    Time last_time() const { return times.back(); }
    Time exit() const;

    bool observed(Time t) const noexcept;
    /// Position of time `t` in the arrays; `t` must be observed.
    std::size_t index_of(Time t) const;
    double y_at(Time t) const { return outcomes[index_of(t)]; }
    std::size_t covariate_dim() const noexcept;

    /// Appends one observation at `last_time() + 1` (or at any t >= entry for an empty record).
    void append(Time t, std::vector<double> w, double y);
};

/// Throws DataValidation when a record breaks its invariants.
void validate(const PanelRecord& record);

class Panel {
public:
    Panel() = default;
    /// `horizon_tau` defaults to the largest observed time.
    /// Records are kept in ascending id order.
    explicit Panel(std::vector<PanelRecord> records, std::optional<Time> horizon_tau = std::nullopt);

    const std::vector<PanelRecord>& records() const noexcept { return records_; }
    Time horizon() const noexcept { return horizon_tau_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const PanelRecord* find(SubjectId id) const;
    const PanelRecord& at(SubjectId id) const;
    std::vector<SubjectId> ids() const;

private:
    std::vector<PanelRecord> records_;
    Time horizon_tau_ = 0;
};

enum class SummaryKind { LagWindow, RunningMean };

struct SummarySpec {
    SummaryKind kind = SummaryKind::LagWindow;
    int memory = 1;
    bool include_baseline = false;
    /// Restrict the summary to the outcome component (pure autoregressive learners).
    bool y_only = false;
};

struct SummaryVector {
    SubjectId subject_id = 0;
    Time as_of_time = 0;
    std::vector<double> values;
};

std::size_t summary_length(const SummarySpec& spec, std::size_t covariate_dim, std::size_t baseline_dim);

/// Z(t-1): the summary of the observations strictly before `t`.
/// Throws InsufficientHistory when the record cannot support it.
SummaryVector make_summary(const PanelRecord& record, const SummarySpec& spec, Time t);

/// m = t - entry. Throws NotYetEnrolled for t < entry.
Time chron_to_subject_time(Time entry, Time t);

/// Subjects with entry <= t <= exit.
std::set<SubjectId> active_set(const Panel& panel, Time t);

struct EnrollmentCounts {
    std::int64_t n_of_t = 0;
    std::map<Time, std::int64_t> n_m_of_t;
};

EnrollmentCounts enrollment_counts(const Panel& panel, Time t);

}  // namespace posl
