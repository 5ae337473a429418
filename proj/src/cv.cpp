#include "posl/cv.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <tuple>

namespace posl {

std::string to_string(FoldScheme scheme) {
    switch (scheme) {
        case FoldScheme::RollingOrigin: return "rolling_origin";
        case FoldScheme::RollingWindow: return "rolling_window";
        case FoldScheme::RollingOriginVFold: return "rolling_origin_vfold";
        case FoldScheme::RollingWindowVFold: return "rolling_window_vfold";
    }
    return "unknown";
}

FoldScheme parse_fold_scheme(const std::string& text) {
    for (auto s : {FoldScheme::RollingOrigin, FoldScheme::RollingWindow, FoldScheme::RollingOriginVFold,
                   FoldScheme::RollingWindowVFold}) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown fold scheme '" + text + "'");
}

bool is_vfold(FoldScheme scheme) noexcept {
    return scheme == FoldScheme::RollingOriginVFold || scheme == FoldScheme::RollingWindowVFold;
}

void validate(const FoldSpec& spec) {
    if (spec.first_window < 1) throw Error(ErrorCode::InvalidArgument, "fold first_window must be >= 1");
    if (spec.validation_size < 1) throw Error(ErrorCode::InvalidArgument, "fold validation_size must be >= 1");
    if (spec.batch < 1) throw Error(ErrorCode::InvalidArgument, "fold batch must be >= 1");
    if (spec.gap < 0) throw Error(ErrorCode::InvalidArgument, "fold gap must be >= 0");
    if (is_vfold(spec.scheme) && spec.sample_folds < 2) {
        throw Error(ErrorCode::InvalidArgument, "fold sample_folds must be >= 2 for sample-split schemes");
    }
}

namespace {

bool grows(FoldScheme scheme) {
    return scheme == FoldScheme::RollingOrigin || scheme == FoldScheme::RollingOriginVFold;
}

void require_scheme(const FoldSpec& spec, bool want_vfold, const char* op) {
    if (is_vfold(spec.scheme) != want_vfold) {
        throw Error(ErrorCode::InvalidArgument, std::string(op) + " called with scheme " + to_string(spec.scheme));
    }
}

// Builds one assignment from time ranges crossed with subject sets; everything else in 1..t is unused.
FoldAssignment materialize(const TimeWindow& w, const std::vector<SubjectId>& train_ids,
                           const std::vector<SubjectId>& val_ids, const std::set<SubjectId>& subjects, Time t) {
    FoldAssignment fa;
    fa.time_fold = w.v;
    const std::set<SubjectId> train_set(train_ids.begin(), train_ids.end());
    const std::set<SubjectId> val_set(val_ids.begin(), val_ids.end());
    for (SubjectId id : subjects) {
        for (Time s = 1; s <= t; ++s) {
            const bool in_train = train_set.contains(id) && s >= w.train_begin && s <= w.train_end;
            const bool in_val = val_set.contains(id) && s >= w.val_begin && s <= w.val_end;
            if (in_train) {
                fa.train.push_back({id, s});
            } else if (in_val) {
                fa.validation.push_back({id, s});
            } else {
                fa.unused.push_back({id, s});
            }
        }
    }
    return fa;
}

std::vector<FoldAssignment> single_axis_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t) {
    validate(spec);
    const auto windows = time_windows(spec, t);
    if (windows.empty()) {
        throw Error(ErrorCode::SpecDoesNotFit, "no fold fits before t=" + std::to_string(t));
    }
    const std::vector<SubjectId> ids(subjects.begin(), subjects.end());
    std::vector<FoldAssignment> out;
    for (const auto& w : windows) {
        out.push_back(materialize(w, ids, ids, subjects, t));
        out.back().fold_index = static_cast<int>(out.size());
    }
    return out;
}

}  // namespace

std::vector<TimeWindow> time_windows(const FoldSpec& spec, Time horizon) {
    std::vector<TimeWindow> out;
    for (int v = 1;; ++v) {
        const Time train_end = spec.first_window + static_cast<Time>(spec.batch) * (v - 1);
        TimeWindow w;
        w.v = v;
        w.train_end = train_end;
        w.train_begin = grows(spec.scheme) ? 1 : static_cast<Time>(spec.batch) * (v - 1) + 1;
        w.val_begin = train_end + spec.gap + 1;
        w.val_end = train_end + spec.gap + spec.validation_size;
        if (w.val_end > horizon) break;
        out.push_back(w);
    }
    return out;
}

std::vector<std::vector<SubjectId>> subject_groups(const std::set<SubjectId>& subjects, int groups) {
    if (groups < 1) throw Error(ErrorCode::InvalidArgument, "need at least one subject group");
    if (subjects.size() < static_cast<std::size_t>(groups)) {
        throw Error(ErrorCode::TooFewSubjects, std::to_string(subjects.size()) + " subjects for " +
                                                   std::to_string(groups) + " sample folds");
    }
    std::vector<std::vector<SubjectId>> out(static_cast<std::size_t>(groups));
    std::size_t k = 0;
    for (SubjectId id : subjects) out[k++ % out.size()].push_back(id);
    return out;
}

std::vector<FoldAssignment> rolling_origin_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t) {
    if (spec.scheme != FoldScheme::RollingOrigin) require_scheme(spec, false, "rolling_origin_folds");
    FoldSpec s = spec;
    s.scheme = FoldScheme::RollingOrigin;
    return single_axis_folds(s, subjects, t);
}

std::vector<FoldAssignment> rolling_window_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t) {
    if (spec.scheme != FoldScheme::RollingWindow) require_scheme(spec, false, "rolling_window_folds");
    FoldSpec s = spec;
    s.scheme = FoldScheme::RollingWindow;
    return single_axis_folds(s, subjects, t);
}

std::vector<FoldAssignment> vfold_variant_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t) {
    require_scheme(spec, true, "vfold_variant_folds");
    validate(spec);
    const auto groups = subject_groups(subjects, spec.sample_folds);
    const auto windows = time_windows(spec, t);
    if (windows.empty()) {
        throw Error(ErrorCode::SpecDoesNotFit, "no fold fits before t=" + std::to_string(t));
    }
    std::vector<FoldAssignment> out;
    for (const auto& w : windows) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            std::vector<SubjectId> train_ids;
            for (std::size_t h = 0; h < groups.size(); ++h) {
                if (h != g) train_ids.insert(train_ids.end(), groups[h].begin(), groups[h].end());
            }
            out.push_back(materialize(w, train_ids, groups[g], subjects, t));
            out.back().sample_fold = static_cast<int>(g) + 1;
            out.back().fold_index = static_cast<int>(out.size());
        }
    }
    return out;
}

std::vector<FoldAssignment> make_folds(const FoldSpec& spec, const std::set<SubjectId>& subjects, Time t) {
    switch (spec.scheme) {
        case FoldScheme::RollingOrigin: return rolling_origin_folds(spec, subjects, t);
        case FoldScheme::RollingWindow: return rolling_window_folds(spec, subjects, t);
        default: return vfold_variant_folds(spec, subjects, t);
    }
}

std::vector<SubjectWindow> dynamic_windows(const FoldSpec& spec, const Panel& panel, Time t) {
    validate(spec);
    std::set<SubjectId> enrolled;
    for (const auto& r : panel.records()) {
        if (r.entry_time <= t) enrolled.insert(r.subject_id);
    }
    std::vector<std::vector<SubjectId>> groups;
    if (is_vfold(spec.scheme)) groups = subject_groups(enrolled, spec.sample_folds);

    const auto usable = [&](const PanelRecord& r, Time s) { return s <= t && s <= r.exit() && r.observed(s); };
    const auto in_group = [&](SubjectId id, std::size_t g) {
        return std::find(groups[g].begin(), groups[g].end(), id) != groups[g].end();
    };

    // (v, sample_fold, id) ordering comes from the map key.
    std::map<std::tuple<int, int, SubjectId>, SubjectWindow> keyed;
    for (const auto& r : panel.records()) {
        if (r.entry_time > t) continue;
        const Time horizon = chron_to_subject_time(r.entry_time, t);
        for (const auto& w : time_windows(spec, horizon)) {
            const std::size_t n_groups = groups.empty() ? 1 : groups.size();
            for (std::size_t g = 0; g < n_groups; ++g) {
                const bool validates = groups.empty() || in_group(r.subject_id, g);
                const bool trains = groups.empty() || !validates;
                SubjectWindow sw;
                sw.id = r.subject_id;
                sw.v = w.v;
                sw.sample_fold = groups.empty() ? 0 : static_cast<int>(g) + 1;
                if (trains) {
                    for (Time m = w.train_begin; m <= w.train_end; ++m) {
                        if (usable(r, r.entry_time + m)) sw.train.push_back(r.entry_time + m);
                    }
                }
                if (validates) {
                    for (Time m = w.val_begin; m <= w.val_end; ++m) {
                        if (usable(r, r.entry_time + m)) sw.validation.push_back(r.entry_time + m);
                    }
                }
                keyed.emplace(std::make_tuple(sw.v, sw.sample_fold, sw.id), std::move(sw));
            }
        }
    }
    std::vector<SubjectWindow> out;
    out.reserve(keyed.size());
    for (auto& [key, sw] : keyed) out.push_back(std::move(sw));
    return out;
}

std::vector<FoldAssignment> dynamic_stream_folds(const FoldSpec& spec, const Panel& panel, Time t) {
    const auto windows = dynamic_windows(spec, panel, t);
    if (windows.empty()) {
        throw Error(ErrorCode::SpecDoesNotFit, "no enrolled subject admits a fold at t=" + std::to_string(t));
    }
    std::vector<FoldAssignment> out;
    std::size_t k = 0;
    while (k < windows.size()) {
        const int v = windows[k].v;
        const int g = windows[k].sample_fold;
        std::set<FoldPoint> train;
        std::set<FoldPoint> val;
        for (; k < windows.size() && windows[k].v == v && windows[k].sample_fold == g; ++k) {
            for (Time s : windows[k].train) train.insert({windows[k].id, s});
            for (Time s : windows[k].validation) val.insert({windows[k].id, s});
        }
        FoldAssignment fa;
        fa.time_fold = v;
        fa.sample_fold = g;
        for (const auto& r : panel.records()) {
            for (Time s = 1; s <= t; ++s) {
                const FoldPoint p{r.subject_id, s};
                if (train.contains(p)) {
                    fa.train.push_back(p);
                } else if (val.contains(p)) {
                    fa.validation.push_back(p);
                } else {
                    fa.unused.push_back(p);
                }
            }
        }
        std::sort(fa.train.begin(), fa.train.end());
        std::sort(fa.validation.begin(), fa.validation.end());
        std::sort(fa.unused.begin(), fa.unused.end());
        out.push_back(std::move(fa));
        out.back().fold_index = static_cast<int>(out.size());
    }
    return out;
}

void write_folds_csv(std::ostream& out, const std::vector<FoldAssignment>& folds) {
    out << "fold,id,t,role\n";
    for (const auto& f : folds) {
        std::vector<std::pair<FoldPoint, const char*>> rows;
        for (const auto& p : f.train) rows.emplace_back(p, "train");
        for (const auto& p : f.validation) rows.emplace_back(p, "val");
        for (const auto& p : f.unused) rows.emplace_back(p, "unused");
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [p, role] : rows) out << f.fold_index << ',' << p.id << ',' << p.t << ',' << role << '\n';
    }
}

}  // namespace posl
