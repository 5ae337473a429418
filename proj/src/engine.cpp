#include "posl/engine.hpp"

#include "posl/error.hpp"
#include "posl/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace posl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

LearnerSpec linear(std::string name, LearnerFamily family, LearnerScope scope, int lags, double lambda) {
    LearnerSpec s;
    s.name = std::move(name);
    s.family = family;
    s.scope = scope;
    s.summary = SummarySpec{SummaryKind::LagWindow, lags, false, true};
    s.ridge_lambda = lambda;
    return s;
}

std::size_t coefficient_count(const LearnerSpec& spec, const PanelRecord& record) {
    if (!uses_summary(spec)) return 1;
    const std::size_t z = summary_length(spec.summary, record.covariate_dim(), 0);
    return 1 + z + (uses_baseline(spec) ? record.baseline.size() : 0);
}

}  // namespace

std::vector<LearnerSpec> default_library() {
    std::vector<LearnerSpec> lib;
    lib.push_back(linear("hist_lag_linear", LearnerFamily::LagLinear, LearnerScope::Historical, 5, 0.0));
    lib.push_back(linear("hist_ridge", LearnerFamily::RidgeRls, LearnerScope::Historical, 5, 10.0));
    LearnerSpec hm;
    hm.name = "hist_mean";
    hm.family = LearnerFamily::GlobalMean;
    hm.scope = LearnerScope::Historical;
    lib.push_back(hm);

    lib.push_back(linear("ind_lag_linear", LearnerFamily::LagLinear, LearnerScope::Individual, 10, 0.0));
    lib.push_back(linear("ind_ridge", LearnerFamily::RidgeRls, LearnerScope::Individual, 10, 1.0));
    LearnerSpec es;
    es.name = "ind_exp_smooth";
    es.family = LearnerFamily::ExpSmooth;
    es.scope = LearnerScope::Individual;
    es.smoothing = 0.3;
    lib.push_back(es);
    LearnerSpec im;
    im.name = "ind_mean";
    im.family = LearnerFamily::GlobalMean;
    im.scope = LearnerScope::Individual;
    lib.push_back(im);
    return lib;
}

void validate(const EngineConfig& c) {
    const auto fail = [](const std::string& field, const std::string& msg) {
        throw Error(ErrorCode::InvalidArgument, field + ": " + msg);
    };
    if (c.batch_size < 1) fail("batch_size", "must be >= 1");
    if (c.forecast_horizon < 1) fail("forecast_horizon", "must be >= 1");
    if (c.warmup < 0) fail("warmup", "must be >= 0");
    try {
        validate(c.fold_spec);
    } catch (const Error& e) {
        fail("fold_spec", e.what());
    }
    if (is_vfold(c.fold_spec.scheme)) fail("fold_spec.scheme", "sample-split schemes are not available for streaming");
    if (c.decay) {
        try {
            validate(*c.decay);
        } catch (const Error& e) {
            fail("decay", e.what());
        }
    }
    if (c.conditional.iterations < 0 || !(c.conditional.step > 0.0)) fail("conditional", "need iterations >= 0 and step > 0");
    if (c.learners.empty()) fail("learners", "library is empty");
    std::set<std::string> names;
    bool any_historical = false;
    for (std::size_t k = 0; k < c.learners.size(); ++k) {
        const auto& s = c.learners[k];
        const std::string field = "learners[" + std::to_string(k) + "]";
        if (s.name.empty()) fail(field + ".name", "must not be empty");
        if (!names.insert(s.name).second) fail(field + ".name", "duplicate '" + s.name + "'");
        try {
            validate(s);
        } catch (const Error& e) {
            fail(field, e.what());
        }
        if (required_history(s) > c.warmup) {
            fail("warmup", "must be >= the largest learner lag (" + std::to_string(required_history(s)) + ")");
        }
        any_historical = any_historical || s.scope == LearnerScope::Historical;
    }
    if (!any_historical) fail("learners", "need at least one historical learner");
    if (c.group_candidates && (names.contains(kHistoricalGroup) || names.contains(kIndividualGroup))) {
        fail("learners", "names '" + std::string(kHistoricalGroup) + "' and '" + kIndividualGroup +
                             "' are reserved for group candidates");
    }
    for (Time t : c.historical_refresh_times) {
        if (t < 0) fail("historical_refresh_times", "times must be >= 0");
    }
}

std::vector<std::vector<Observation>> make_batches(const PanelRecord& record, int batch_size) {
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
    std::vector<std::vector<Observation>> out;
    for (std::size_t k = 0; k < record.size(); k += static_cast<std::size_t>(batch_size)) {
        std::vector<Observation> batch;
        for (std::size_t j = k; j < std::min(record.size(), k + static_cast<std::size_t>(batch_size)); ++j) {
            batch.push_back({record.subject_id, record.times[j], record.covariates[j], record.outcomes[j]});
        }
        out.push_back(std::move(batch));
    }
    return out;
}

Engine::Engine(Panel historical, std::vector<PanelRecord> targets, EngineConfig config)
    : config_(std::move(config)), historical_(std::move(historical)), targets_(std::move(targets)) {
    validate(config_);
    if (historical_.empty()) throw Error(ErrorCode::InvalidArgument, "historical panel is empty");
    std::set<SubjectId> seen;
    for (const auto& r : targets_) {
        if (!r.empty()) throw Error(ErrorCode::InvalidArgument, "targets must start without observations");
        if (historical_.find(r.subject_id)) {
            throw Error(ErrorCode::InvalidArgument, "subject " + std::to_string(r.subject_id) + " is both historical and target");
        }
        if (!seen.insert(r.subject_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate target id");
    }
    std::sort(targets_.begin(), targets_.end(),
              [](const PanelRecord& a, const PanelRecord& b) { return a.subject_id < b.subject_id; });
    for (const auto& s : config_.learners) ids_.push_back(s.name);
    if (config_.group_candidates) {
        bool has_individual = false;
        for (const auto& s : config_.learners) has_individual = has_individual || s.scope == LearnerScope::Individual;
        ids_.push_back(kHistoricalGroup);
        if (has_individual) ids_.push_back(kIndividualGroup);
    }
    table_ = RiskTable(ids_);
    individual_.assign(targets_.size(), std::vector<std::optional<FittedLearner>>(ids_.size()));
    individual_cv_ = individual_;

    std::vector<std::string> diagnostics;
    refresh_historical(diagnostics);
    bool any = false;
    for (const auto& f : versions_.back().fits) any = any || f.has_value();
    if (!any) throw Error(ErrorCode::InvalidArgument, "no historical learner could be fitted");
    reweight();
}

Panel Engine::target_panel() const { return Panel(targets_); }

bool Engine::is_individual(std::size_t k) const {
    if (is_group(k)) return ids_[k] == kIndividualGroup;
    return config_.learners[k].scope == LearnerScope::Individual;
}

std::vector<std::size_t> Engine::group_members(std::size_t g) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < config_.learners.size(); ++k) {
        if (is_individual(k) == is_individual(g)) out.push_back(k);
    }
    return out;
}

void Engine::refit_groups() {
    for (std::size_t g = config_.learners.size(); g < ids_.size(); ++g) {
        const auto members = group_members(g);
        std::vector<double> alpha(ids_.size(), 0.0);
        MetaDesign design;
        for (auto k : members) design.learners.push_back(ids_[k]);
        for (const auto& e : log_) {
            MetaRow row{e.id, e.t, e.m, e.x, {}, e.y, point_weight(e.id, e.m)};
            if (row.weight <= 0.0) continue;
            for (auto k : members) row.preds.push_back(e.preds[k]);
            if (std::none_of(row.preds.begin(), row.preds.end(), [](double v) { return std::isnan(v); })) {
                design.rows.push_back(std::move(row));
            }
        }
        if (design.rows.empty()) {
            for (auto k : members) alpha[k] = 1.0 / static_cast<double>(members.size());
        } else {
            const auto w = nnls_weights(design);
            for (std::size_t j = 0; j < members.size(); ++j) alpha[members[j]] = w.alpha[j];
        }
        group_alpha_[g] = std::move(alpha);
    }
}

double Engine::group_value(std::size_t g, const std::vector<double>& values) const {
    const auto& alpha = group_alpha_.at(g);
    const auto members = group_members(g);
    double mass = 0.0;
    double sum = 0.0;
    std::size_t present = 0;
    for (auto k : members) {
        if (std::isnan(values[k])) continue;
        ++present;
        mass += alpha[k];
        sum += alpha[k] * values[k];
    }
    if (present == 0) return kNaN;
    if (mass > 0.0) return sum / mass;
    // The weighted members are missing: average the ones present.
    sum = 0.0;
    for (auto k : members) {
        if (!std::isnan(values[k])) sum += values[k];
    }
    return sum / static_cast<double>(present);
}

std::size_t Engine::target_index(SubjectId id) const {
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        if (targets_[i].subject_id == id) return i;
    }
    throw Error(ErrorCode::InvalidArgument, "subject " + std::to_string(id) + " is not a target");
}

Time Engine::current_subject_time(const PanelRecord& r) const {
    return std::max<Time>(0, std::min(clock_, r.exit()) - r.entry_time);
}

double Engine::individual_mass(const EnsembleWeights& w) const {
    double mass = 0.0;
    for (std::size_t k = 0; k < ids_.size(); ++k) {
        if (is_individual(k)) mass += w.weight_of(ids_[k]);
    }
    return mass;
}

void Engine::refresh_historical(std::vector<std::string>& diagnostics) {
    Version v;
    v.cutoff = clock_;
    v.fits.resize(ids_.size());
    for (std::size_t k = 0; k < config_.learners.size(); ++k) {
        const auto& spec = config_.learners[k];
        if (spec.scope != LearnerScope::Historical) continue;
        std::vector<Row> rows;
        for (const auto& r : historical_.records()) {
            if (r.empty()) continue;
            auto part = make_rows(r, spec, r.first_time(), r.last_time());
            rows.insert(rows.end(), part.begin(), part.end());
        }
        for (const auto& r : targets_) {
            if (r.empty()) continue;
            auto part = make_rows(r, spec, r.first_time(), clock_);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        if (rows.empty()) {
            diagnostics.push_back("historical learner '" + spec.name + "' has no training rows");
            continue;
        }
        try {
            v.fits[k] = fit(spec, rows);
        } catch (const Error& e) {
            diagnostics.push_back("historical learner '" + spec.name + "' dropped: " + e.what());
        }
    }
    versions_.push_back(std::move(v));
}

double Engine::point_weight(SubjectId id, Time m) const {
    if (!config_.decay) return 1.0;
    const auto& r = targets_[target_index(id)];
    return decay_weight(current_subject_time(r), m, *config_.decay);
}

void Engine::score_new_folds(std::vector<std::string>& diagnostics) {
    const Panel panel = target_panel();
    const auto windows = dynamic_windows(config_.fold_spec, panel, clock_);
    const bool rolling_origin = config_.fold_spec.scheme == FoldScheme::RollingOrigin;
    const EnsembleWeights prior = weights_;
    std::vector<LossRecord> fresh;

    for (const auto& w : windows) {
        if (w.validation.empty() || w.train.empty()) continue;
        if (!scored_.insert({w.id, w.v, w.sample_fold}).second) continue;
        const std::size_t ti = target_index(w.id);
        const PanelRecord& rec = targets_[ti];
        const Time train_end = w.train.back();

        // Latest Historical version whose data stops at or before the fold's training end.
        const Version* version = &versions_.front();
        for (const auto& v : versions_) {
            if (v.cutoff <= train_end) version = &v;
        }

        std::vector<std::optional<FittedLearner>> fold_fits(ids_.size());
        for (std::size_t k = 0; k < config_.learners.size(); ++k) {
            const auto& spec = config_.learners[k];
            if (spec.scope == LearnerScope::Historical) {
                fold_fits[k] = version->fits[k];
                continue;
            }
            try {
                auto& state = individual_cv_[ti][k];
                if (rolling_origin && state) {
                    if (state->trained_through() < train_end) {
                        const auto rows = make_rows(rec, spec, state->trained_through() + 1, train_end);
                        if (!rows.empty()) state = update(*state, rows);
                    }
                    fold_fits[k] = state;
                    continue;
                }
                const auto rows = make_rows(rec, spec, w.train.front(), train_end);
                // Fewer rows than coefficients would only interpolate noise.
                if (rows.empty() || rows.size() < coefficient_count(spec, rec)) continue;
                auto fitted = fit(spec, rows);
                if (rolling_origin) state = fitted;
                fold_fits[k] = std::move(fitted);
            } catch (const Error& e) {
                diagnostics.push_back("individual learner '" + spec.name + "' skipped fold " + std::to_string(w.v) +
                                      " of subject " + std::to_string(w.id) + ": " + e.what());
            }
        }

        for (Time s : w.validation) {
            ValidationEntry entry;
            entry.scored_at = clock_;
            entry.id = w.id;
            entry.t = s;
            entry.m = chron_to_subject_time(rec.entry_time, s);
            entry.x = rec.baseline;
            entry.y = rec.y_at(s);
            entry.preds.assign(ids_.size(), kNaN);
            for (std::size_t k = 0; k < config_.learners.size(); ++k) {
                if (!fold_fits[k]) continue;
                const auto row = make_row(rec, config_.learners[k], s);
                if (!row) continue;
                const double p = predict(*fold_fits[k], *row);
                if (!std::isfinite(p)) continue;
                entry.preds[k] = p;
                fresh.push_back({ids_[k], w.id, s, entry.m, squared_error(entry.y, p), 1.0});
            }
            // Group ensembles combine with the member weights fitted before this step.
            for (std::size_t g = config_.learners.size(); g < ids_.size(); ++g) {
                const double p = group_value(g, entry.preds);
                if (std::isnan(p)) continue;
                entry.preds[g] = p;
                fresh.push_back({ids_[g], w.id, s, entry.m, squared_error(entry.y, p), 1.0});
            }
            std::vector<bool> available(ids_.size());
            for (std::size_t k = 0; k < ids_.size(); ++k) available[k] = !std::isnan(entry.preds[k]);
            const auto a = available_weights(prior, available, entry.x);
            if (!a.empty()) {
                double e = 0.0;
                for (std::size_t k = 0; k < ids_.size(); ++k) {
                    if (a[k] > 0.0) e += a[k] * entry.preds[k];
                }
                entry.ensemble = e;
            }
            log_.push_back(std::move(entry));
        }
    }
    rebuild_risk(fresh);
}

void Engine::rebuild_risk(const std::vector<LossRecord>& fresh) {
    if (!config_.decay) {
        table_ = accumulate(table_, fresh, clock_);
        return;
    }
    losses_.insert(losses_.end(), fresh.begin(), fresh.end());
    std::vector<LossRecord> kept;
    kept.reserve(losses_.size());
    for (auto rec : losses_) {
        rec.weight = point_weight(rec.subject_id, rec.subject_time);
        // Lags only grow, so a zero weight is final.
        if (rec.weight > 0.0) kept.push_back(rec);
    }
    losses_ = kept;
    table_ = accumulate(RiskTable(ids_), losses_, clock_);
}

void Engine::update_individuals(std::vector<std::string>& diagnostics) {
    for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
        const auto& rec = targets_[ti];
        if (rec.empty() || rec.entry_time > clock_) continue;
        if (current_subject_time(rec) < config_.warmup) continue;
        for (std::size_t k = 0; k < config_.learners.size(); ++k) {
            if (!is_individual(k)) continue;
            const auto& spec = config_.learners[k];
            auto& state = individual_[ti][k];
            try {
                if (state) {
                    const auto rows = make_rows(rec, spec, state->trained_through() + 1, clock_);
                    if (!rows.empty()) state = update(*state, rows);
                } else {
                    const auto rows = make_rows(rec, spec, rec.first_time(), clock_);
                    if (!rows.empty()) state = fit(spec, rows);
                }
            } catch (const Error& e) {
                state.reset();
                diagnostics.push_back("individual learner '" + spec.name + "' for subject " +
                                      std::to_string(rec.subject_id) + " dropped: " + e.what());
            }
        }
    }
}

std::vector<std::size_t> Engine::candidates() const {
    std::vector<std::size_t> out;
    bool historical_mass = false;
    for (std::size_t k = 0; k < ids_.size(); ++k) {
        if (!is_individual(k) && table_.overall(ids_[k]).weight > 0.0) historical_mass = true;
    }
    if (!historical_mass) return out;
    for (std::size_t k = 0; k < ids_.size(); ++k) {
        if (table_.overall(ids_[k]).weight <= 0.0) continue;
        if (is_individual(k)) {
            // Enters once some target has passed warmup and holds a live fit.
            bool live = false;
            const auto members = is_group(k) ? group_members(k) : std::vector<std::size_t>{k};
            for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
                for (auto j : members) live = live || individual_[ti][j].has_value();
            }
            if (!live) continue;
        }
        out.push_back(k);
    }
    return out;
}

EnsembleWeights Engine::select(const std::vector<std::size_t>& cand, std::optional<Time> m) const {
    std::vector<std::string> names;
    for (auto k : cand) names.push_back(ids_[k]);
    const auto expand = [&](const EnsembleWeights& sub) {
        EnsembleWeights full = sub;
        full.learners = ids_;
        full.alpha.assign(ids_.size(), 0.0);
        if (sub.mode == WeightMode::Conditional) full.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids_.size()), sub.beta.cols());
        for (std::size_t j = 0; j < cand.size(); ++j) {
            full.alpha[cand[j]] = sub.alpha[j];
            if (sub.mode == WeightMode::Conditional) full.beta.row(static_cast<Eigen::Index>(cand[j])) = sub.beta.row(static_cast<Eigen::Index>(j));
        }
        if (sub.mode == WeightMode::Conditional) {
            // Non-candidates get a large negative intercept so they carry no softmax mass.
            for (std::size_t k = 0; k < ids_.size(); ++k) {
                if (std::find(cand.begin(), cand.end(), k) == cand.end()) full.beta(static_cast<Eigen::Index>(k), 0) = -1e300;
            }
        }
        return full;
    };
    const auto discrete = [&]() { return one_hot(ids_, discrete_select(table_, m, names)); };

    if (config_.mode == WeightMode::Discrete || cand.size() == 1) {
        if (cand.size() == 1) return one_hot(ids_, names.front());
        return discrete();
    }
    MetaDesign design;
    design.learners = names;
    for (const auto& e : log_) {
        if (m && e.m != *m) continue;
        MetaRow row{e.id, e.t, e.m, e.x, {}, e.y, point_weight(e.id, e.m)};
        if (row.weight <= 0.0) continue;
        bool complete = true;
        for (auto k : cand) {
            if (std::isnan(e.preds[k])) {
                complete = false;
                break;
            }
            row.preds.push_back(e.preds[k]);
        }
        if (complete) design.rows.push_back(std::move(row));
    }
    if (design.rows.empty()) return discrete();
    if (config_.mode == WeightMode::Convex) return expand(nnls_weights(design));
    return expand(fit_conditional(design, config_.conditional));
}

void Engine::reweight() {
    refit_groups();
    const auto cand = candidates();
    StepRecord rec;
    rec.t = clock_;
    weights_by_m_.clear();
    if (cand.empty()) {
        std::vector<std::string> hist;
        for (std::size_t k = 0; k < ids_.size(); ++k) {
            if (!is_individual(k) && versions_.back().fits[k]) hist.push_back(ids_[k]);
        }
        EnsembleWeights full;
        full.mode = config_.mode;
        full.learners = ids_;
        full.alpha.assign(ids_.size(), 0.0);
        for (const auto& name : hist) full.alpha[table_.registration_index(name)] = 1.0 / static_cast<double>(hist.size());
        weights_ = full;
    } else {
        weights_ = select(cand, std::nullopt);
        std::vector<std::string> names;
        for (auto k : cand) {
            names.push_back(ids_[k]);
            rec.individuals_selected = rec.individuals_selected || is_individual(k);
        }
        rec.discrete_choice = discrete_select(table_, std::nullopt, names);
        if (config_.per_m_selection) {
            for (const auto& r : targets_) {
                if (r.entry_time > clock_) continue;
                for (int j = 1; j <= config_.forecast_horizon; ++j) {
                    const Time m = current_subject_time(r) + j;
                    if (weights_by_m_.contains(m)) continue;
                    std::vector<std::size_t> at_m;
                    for (auto k : cand) {
                        if (table_.at(ids_[k], m).weight > 0.0) at_m.push_back(k);
                    }
                    if (!at_m.empty()) weights_by_m_[m] = select(at_m, m);
                }
            }
        }
    }
    rec.weights = weights_;
    history_.push_back(std::move(rec));
}

std::vector<double> Engine::available_weights(const EnsembleWeights& w, const std::vector<bool>& available,
                                              std::span<const double> x) const {
    std::vector<double> a = w.alpha_at(x);
    double mass = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!available[k]) a[k] = 0.0;
        mass += a[k];
    }
    if (mass <= 0.0) {
        // Fall back to uniform weights over the available Historical learners.
        std::fill(a.begin(), a.end(), 0.0);
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (available[k] && !is_individual(k)) {
                a[k] = 1.0;
                mass += 1.0;
            }
        }
        if (mass <= 0.0) return {};
    }
    for (double& v : a) v /= mass;
    return a;
}

std::vector<ForecastRow> Engine::forecast(std::vector<std::string>& diagnostics) const {
    std::vector<ForecastRow> out;
    const int h = config_.forecast_horizon;
    for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
        const auto& rec = targets_[ti];
        if (rec.entry_time > clock_ || clock_ > rec.exit() || (rec.empty() && rec.exit_time && clock_ > *rec.exit_time)) continue;
        std::vector<std::vector<double>> paths(ids_.size());
        std::vector<bool> available(ids_.size(), false);
        for (std::size_t k = 0; k < config_.learners.size(); ++k) {
            const FittedLearner* f = nullptr;
            if (is_individual(k)) {
                if (individual_[ti][k]) f = &*individual_[ti][k];
            } else if (versions_.back().fits[k]) {
                f = &*versions_.back().fits[k];
            }
            if (!f) continue;
            try {
                if (rec.empty()) {
                    if (uses_summary(f->spec())) continue;
                    paths[k].assign(static_cast<std::size_t>(h), predict(*f, rec.baseline, {}, clock_ + 1));
                } else {
                    paths[k] = forecast_recursive(*f, rec, h);
                }
                available[k] = true;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InsufficientHistory) {
                    diagnostics.push_back("learner '" + ids_[k] + "' could not forecast subject " +
                                          std::to_string(rec.subject_id) + ": " + e.what());
                }
            }
        }
        for (std::size_t g = config_.learners.size(); g < ids_.size(); ++g) {
            std::vector<double> at(ids_.size());
            for (int j = 0; j < h; ++j) {
                for (std::size_t k = 0; k < config_.learners.size(); ++k) {
                    at[k] = available[k] ? paths[k][static_cast<std::size_t>(j)] : kNaN;
                }
                paths[g].push_back(group_value(g, at));
            }
            available[g] = !std::isnan(paths[g].front());
        }
        for (int j = 1; j <= h; ++j) {
            const EnsembleWeights* w = &weights_;
            if (config_.per_m_selection) {
                const auto it = weights_by_m_.find(current_subject_time(rec) + j);
                if (it != weights_by_m_.end()) w = &it->second;
            }
            const auto a = available_weights(*w, available, rec.baseline);
            if (a.empty()) {
                diagnostics.push_back("no learner can forecast subject " + std::to_string(rec.subject_id));
                break;
            }
            double yhat = 0.0;
            for (std::size_t k = 0; k < ids_.size(); ++k) {
                if (a[k] > 0.0) yhat += a[k] * paths[k][static_cast<std::size_t>(j - 1)];
            }
            out.push_back({rec.subject_id, clock_, j, yhat});
        }
    }
    return out;
}

StepOutput Engine::step(const std::vector<Observation>& batch, std::optional<Time> until) {
    Time new_clock = until.value_or(clock_);
    if (!until) {
        if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch needs an explicit clock");
        for (const auto& o : batch) new_clock = std::max(new_clock, o.t);
    }
    if (new_clock <= clock_) {
        throw Error(ErrorCode::StaleBatch, "clock " + std::to_string(new_clock) + " does not advance past " + std::to_string(clock_));
    }
    std::vector<Observation> sorted = batch;
    std::sort(sorted.begin(), sorted.end(), [](const Observation& a, const Observation& b) {
        return std::tie(a.id, a.t) < std::tie(b.id, b.t);
    });
    for (const auto& o : sorted) {
        if (o.t <= clock_ || o.t > new_clock) {
            throw Error(ErrorCode::StaleBatch, "observation at t=" + std::to_string(o.t) + " outside (" +
                                                   std::to_string(clock_) + ", " + std::to_string(new_clock) + "]");
        }
        if (!std::isfinite(o.y)) throw Error(ErrorCode::DataValidation, "non-finite outcome");
    }
    // Validate everything before mutating so a rejected batch leaves the state untouched.
    auto staged = targets_;
    for (const auto& o : sorted) staged[target_index(o.id)].append(o.t, o.w, o.y);
    for (const auto& r : staged) validate(r);
    targets_ = std::move(staged);

    const Time previous = clock_;
    clock_ = new_clock;
    StepOutput out;
    score_new_folds(out.diagnostics);
    const bool crosses = std::any_of(config_.historical_refresh_times.begin(), config_.historical_refresh_times.end(),
                                     [&](Time ts) { return ts > previous && ts <= clock_; });
    if (crosses) refresh_historical(out.diagnostics);
    update_individuals(out.diagnostics);
    reweight();
    out.t = clock_;
    out.weights = weights_;
    out.forecasts = forecast(out.diagnostics);
    return out;
}

OracleReport oracle_eval(const Engine& engine, const TruthTrace& truth) {
    OracleReport report;
    report.learners = engine.learner_ids();
    const std::size_t K = report.learners.size();
    const auto& log = engine.validation_log();
    std::vector<double> psi(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto v = truth.at(log[i].id, log[i].t);
        if (!v) {
            throw Error(ErrorCode::MissingTruth, "no psi0 for subject " + std::to_string(log[i].id) + " at t=" +
                                                     std::to_string(log[i].t));
        }
        psi[i] = *v;
    }
    const auto& decay = engine.config().decay;
    const auto subject_time_at = [&](SubjectId id, Time t) {
        for (const auto& r : engine.targets()) {
            if (r.subject_id == id) return std::max<Time>(0, std::min(t, r.exit()) - r.entry_time);
        }
        return Time{0};
    };
    std::size_t seen = 0;
    for (const auto& step : engine.history()) {
        while (seen < log.size() && log[seen].scored_at <= step.t) ++seen;
        // Points carry the loss weights in force at this step, as in the cross-validated risk.
        std::vector<double> sum(K, 0.0);
        std::vector<double> mass(K, 0.0);
        double ens_sum = 0.0;
        double ens_mass = 0.0;
        for (std::size_t i = 0; i < seen; ++i) {
            const auto& e = log[i];
            const double w = decay ? decay_weight(subject_time_at(e.id, step.t), e.m, *decay) : 1.0;
            if (w <= 0.0) continue;
            for (std::size_t k = 0; k < K; ++k) {
                if (std::isnan(e.preds[k])) continue;
                sum[k] += w * (e.preds[k] - psi[i]) * (e.preds[k] - psi[i]);
                mass[k] += w;
            }
            if (!std::isnan(e.ensemble)) {
                ens_sum += w * (e.ensemble - psi[i]) * (e.ensemble - psi[i]);
                ens_mass += w;
            }
        }
        if (!step.discrete_choice) continue;
        OracleStep o;
        o.t = step.t;
        o.d0.assign(K, std::numeric_limits<double>::quiet_NaN());
        std::size_t best = K;
        for (std::size_t k = 0; k < K; ++k) {
            if (mass[k] <= 0.0) continue;
            o.d0[k] = sum[k] / mass[k];
            if (best == K || o.d0[k] < o.d0[best]) best = k;
        }
        if (ens_mass > 0.0) o.ensemble_d0 = ens_sum / ens_mass;
        o.oracle = report.learners[best];
        o.selected = *step.discrete_choice;
        const auto sel = static_cast<std::size_t>(
            std::find(report.learners.begin(), report.learners.end(), o.selected) - report.learners.begin());
        const double num = o.d0[sel];
        const double den = o.d0[best];
        o.ratio = den > 0.0 ? num / den : (num > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
        report.steps.push_back(std::move(o));
    }
    return report;
}

void write_forecasts_csv(std::ostream& out, const std::vector<ForecastRow>& rows, const Panel* actual, bool header) {
    if (header) out << "id,t,horizon_step,yhat,y_true\n";
    for (const auto& r : rows) {
        out << r.id << ',' << r.t() << ',' << r.step << ',' << format_double(r.yhat) << ',';
        if (actual) {
            if (const auto* rec = actual->find(r.id); rec && rec->observed(r.t())) out << format_double(rec->y_at(r.t()));
        }
        out << '\n';
    }
}

void write_oracle_csv(std::ostream& out, const OracleReport& report) {
    out << "t,learner,d0,ensemble_d0,oracle,selected,ratio\n";
    for (const auto& s : report.steps) {
        for (std::size_t k = 0; k < report.learners.size(); ++k) {
            out << s.t << ',' << report.learners[k] << ',';
            if (!std::isnan(s.d0[k])) out << format_double(s.d0[k]);
            out << ',';
            if (!std::isnan(s.ensemble_d0)) out << format_double(s.ensemble_d0);
            out << ',' << s.oracle << ',' << s.selected << ',' << format_double(s.ratio) << '\n';
        }
    }
}

}  // namespace posl
