#pragma once

#include "posl/core.hpp"

#include <compare>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace posl {

enum class FoldScheme { RollingOrigin, RollingWindow, RollingOriginVFold, RollingWindowVFold };

std::string to_string(FoldScheme scheme);
FoldScheme parse_fold_scheme(const std::string& text);
bool is_vfold(FoldScheme scheme) noexcept;

/// Time-series split parameters. `first_window` is the initial training size for rolling
/// origin and the fixed window size for rolling window.
struct FoldSpec {
    FoldScheme scheme = FoldScheme::RollingOrigin;
    int first_window = 10;
    int validation_size = 5;
    int batch = 5;
    int gap = 0;
    int sample_folds = 2;
};

void validate(const FoldSpec& spec);

struct FoldPoint {
    SubjectId id = 0;
    Time t = 0;
    auto operator<=>(const FoldPoint&) const = default;
};

/// One materialized split: disjoint training / validation / unused index sets, each sorted by (id, t).
struct FoldAssignment {
    int fold_index = 0;   ///< 1-based position in the emitted list
    int time_fold = 0;    ///< v
    int sample_fold = 0;  ///< v' for sample-split variants, 0 otherwise
    std::vector<FoldPoint> train;
    std::vector<FoldPoint> validation;
    std::vector<FoldPoint> unused;
};

/// Inclusive 1-based time ranges of fold v on a single axis.
struct TimeWindow {
    int v = 0;
    Time train_begin = 0;
    Time train_end = 0;
    Time val_begin = 0;
    Time val_end = 0;
};

/// All windows of the (non-sample-split) scheme whose validation range ends at or before `horizon`.
std::vector<TimeWindow> time_windows(const FoldSpec& spec, Time horizon);

/// Sorted ids dealt round-robin into `groups` groups.
std::vector<std::vector<SubjectId>> subject_groups(const std::set<SubjectId>& subjects, int groups);

std::vector<FoldAssignment> rolling_origin_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t);
std::vector<FoldAssignment> rolling_window_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t);
std::vector<FoldAssignment> vfold_variant_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t);

/// Dispatches on `spec.scheme`.
std::vector<FoldAssignment> make_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t);

/// One subject's fold v in chronological time, clipped to what the subject actually has.
struct SubjectWindow {
    SubjectId id = 0;
    int v = 0;
    int sample_fold = 0;
    std::vector<Time> train;       ///< chronological times, ascending
    std::vector<Time> validation;  ///< chronological times, ascending
};

/// Fold windows on each subject's own time axis m = t - E_i. Points outside the
/// observed part of [E_i, T_i] are dropped. Returned in (v, sample_fold, id) order.
std::vector<SubjectWindow> dynamic_windows(const FoldSpec& spec, const Panel& panel, Time t);

std::vector<FoldAssignment> dynamic_stream_folds(const FoldSpec& spec, const Panel& panel, Time t);

/// CSV `fold,id,t,role` with role in {train,val,unused}.
void write_folds_csv(std::ostream& out, const std::vector<FoldAssignment>& folds);

}  // namespace posl
