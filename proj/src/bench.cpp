#include "posl/bench.hpp"

#include "posl/error.hpp"
#include "posl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <ostream>
#include <thread>

namespace posl {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fingerprint(const Simulation& sim) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto add_record = [&](const PanelRecord& r) {
        h = fnv1a(h, &r.subject_id, sizeof r.subject_id);
        for (double x : r.baseline) h = fnv1a(h, &x, sizeof x);
        for (double y : r.outcomes) h = fnv1a(h, &y, sizeof y);
    };
    for (const auto& r : sim.historical.records()) add_record(r);
    add_record(sim.target);
    return h;
}

PanelRecord shell_of(const PanelRecord& r) {
    PanelRecord shell;
    shell.subject_id = r.subject_id;
    shell.baseline = r.baseline;
    shell.entry_time = r.entry_time;
    shell.exit_time = r.exit_time;
    return shell;
}

PanelRecord prefix(const PanelRecord& r, Time through) {
    PanelRecord out = shell_of(r);
    for (std::size_t k = 0; k < r.size() && r.times[k] <= through; ++k) {
        out.times.push_back(r.times[k]);
        out.covariates.push_back(r.covariates[k]);
        out.outcomes.push_back(r.outcomes[k]);
    }
    return out;
}

double window_mse(const std::vector<double>& yhat, const PanelRecord& actual, Time origin) {
    double s = 0.0;
    for (std::size_t j = 0; j < yhat.size(); ++j) {
        const double e = actual.y_at(origin + static_cast<Time>(j) + 1) - yhat[j];
        s += e * e;
    }
    return s / static_cast<double>(yhat.size());
}

std::vector<double> target_path(const StepOutput& out, SubjectId id, int horizon) {
    std::vector<double> path;
    for (const auto& f : out.forecasts) {
        if (f.id == id) path.push_back(f.yhat);
    }
    if (path.size() != static_cast<std::size_t>(horizon)) {
        throw Error(ErrorCode::InvalidArgument, "engine produced no full forecast at t=" + std::to_string(out.t));
    }
    return path;
}

/// Historical learners fitted once, weighted by NNLS over subject-grouped cross-validation.
class OfflineVFold {
public:
    OfflineVFold(const Panel& historical, const std::vector<LearnerSpec>& library, int vfolds) {
        for (const auto& s : library) {
            if (s.scope == LearnerScope::Historical) specs_.push_back(s);
        }
        const auto ids = historical.ids();
        const auto groups = subject_groups(std::set<SubjectId>(ids.begin(), ids.end()),
                                           std::max(2, std::min<int>(vfolds, static_cast<int>(ids.size()))));
        const auto rows_of = [&](const LearnerSpec& spec, const std::vector<SubjectId>& members) {
            std::vector<Row> rows;
            for (SubjectId id : members) {
                const auto& r = historical.at(id);
                auto part = make_rows(r, spec, r.first_time(), r.last_time());
                rows.insert(rows.end(), part.begin(), part.end());
            }
            return rows;
        };
        // Meta rows keyed by (id, t) so every learner contributes to the same row.
        std::map<std::pair<SubjectId, Time>, MetaRow> meta;
        std::vector<bool> usable(specs_.size(), true);
        std::vector<std::map<std::pair<SubjectId, Time>, double>> cv_preds(specs_.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            std::vector<SubjectId> train_ids;
            for (std::size_t h = 0; h < groups.size(); ++h) {
                if (h != g) train_ids.insert(train_ids.end(), groups[h].begin(), groups[h].end());
            }
            for (std::size_t k = 0; k < specs_.size(); ++k) {
                if (!usable[k]) continue;
                const auto train = rows_of(specs_[k], train_ids);
                if (train.empty()) {
                    usable[k] = false;
                    continue;
                }
                const auto f = fit(specs_[k], train);
                for (const auto& row : rows_of(specs_[k], groups[g])) {
                    cv_preds[k][{row.subject_id, row.t}] = predict(f, row);
                    meta[{row.subject_id, row.t}] = MetaRow{row.subject_id, row.t, row.t, row.x, {}, row.y, 1.0};
                }
            }
        }
        MetaDesign design;
        std::vector<std::size_t> used;
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            if (usable[k]) {
                used.push_back(k);
                design.learners.push_back(specs_[k].name);
            }
        }
        for (auto& [key, row] : meta) {
            bool complete = true;
            for (auto k : used) {
                const auto it = cv_preds[k].find(key);
                if (it == cv_preds[k].end()) {
                    complete = false;
                    break;
                }
                row.preds.push_back(it->second);
            }
            if (complete) design.rows.push_back(row);
        }
        const auto w = nnls_weights(design);
        alpha_.assign(specs_.size(), 0.0);
        for (std::size_t j = 0; j < used.size(); ++j) alpha_[used[j]] = w.alpha[j];
        for (std::size_t k = 0; k < specs_.size(); ++k) {
            std::vector<Row> all;
            for (const auto& r : historical.records()) {
                auto part = make_rows(r, specs_[k], r.first_time(), r.last_time());
                all.insert(all.end(), part.begin(), part.end());
            }
            if (usable[k] && !all.empty()) fits_.push_back(fit(specs_[k], all));
            else fits_.emplace_back(std::nullopt);
        }
    }

    std::vector<double> forecast(const PanelRecord& record, int horizon) const {
        std::vector<double> out(static_cast<std::size_t>(horizon), 0.0);
        double mass = 0.0;
        for (std::size_t k = 0; k < fits_.size(); ++k) {
            if (!fits_[k] || alpha_[k] <= 0.0) continue;
            std::vector<double> path;
            try {
                path = forecast_recursive(*fits_[k], record, horizon);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InsufficientHistory) throw;
                continue;
            }
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += alpha_[k] * path[j];
            mass += alpha_[k];
        }
        if (mass <= 0.0) throw Error(ErrorCode::InsufficientHistory, "no offline learner can forecast yet");
        for (double& v : out) v /= mass;
        return out;
    }

private:
    std::vector<LearnerSpec> specs_;
    std::vector<std::optional<FittedLearner>> fits_;
    std::vector<double> alpha_;
};

}  // namespace

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
    return derive_seed(seed, static_cast<std::uint64_t>(replicate), 0x5eed);
}

EngineConfig pooled_config(const EngineConfig& posl, Time tau) {
    EngineConfig c = posl;
    c.learners.clear();
    for (const auto& s : posl.learners) {
        if (s.scope == LearnerScope::Historical) c.learners.push_back(s);
    }
    c.historical_refresh_times.clear();
    for (Time t = 0; t <= tau; t += posl.batch_size) c.historical_refresh_times.push_back(t);
    return c;
}

EngineConfig study_engine_config() {
    EngineConfig c;
    c.decay = DecaySpec{30, 80, 0.001};
    return c;
}

ReplicateResult run_replicate(const BenchConfig& config, int replicate) {
    const Simulation sim = build_simulation(config.which, config.n_historical, config.tau,
                                            replicate_seed(config.seed, replicate), config.sim);
    ReplicateResult result;
    result.replicate = replicate;
    result.data_fingerprint = fingerprint(sim);
    const PanelRecord& target = sim.target;
    const int h = config.engine.forecast_horizon;
    const Time last = target.last_time();

    Engine posl(sim.historical, {shell_of(target)}, config.engine);
    Engine pooled(sim.historical, {shell_of(target)}, pooled_config(config.engine, last));
    const OfflineVFold offline(sim.historical, config.engine.learners, config.vfolds);

    for (const auto& batch : make_batches(target, config.engine.batch_size)) {
        const auto a = posl.step(batch);
        const auto b = pooled.step(batch);
        const Time t = a.t;
        const double ind = posl.individual_mass(a.weights);
        result.weights.push_back({t, replicate, 1.0 - ind, ind});
        if (t + h > last) continue;
        const auto pa = target_path(a, target.subject_id, h);
        const auto pb = target_path(b, target.subject_id, h);
        const auto pc = offline.forecast(prefix(target, t), h);
        result.mse.push_back({t, kMethodPosl, window_mse(pa, target, t), replicate});
        result.mse.push_back({t, kMethodPooled, window_mse(pb, target, t), replicate});
        result.mse.push_back({t, kMethodVFold, window_mse(pc, target, t), replicate});
    }
    return result;
}

std::vector<ReplicateResult> run_bench(const BenchConfig& config) {
    if (config.replicates < 1) throw Error(ErrorCode::InvalidArgument, "replicates must be >= 1");
    validate(config.engine);
    const int threads = config.threads > 0 ? config.threads
                                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::vector<ReplicateResult> results(static_cast<std::size_t>(config.replicates));
    for (int start = 0; start < config.replicates; start += threads) {
        std::vector<std::future<ReplicateResult>> running;
        for (int r = start; r < std::min(config.replicates, start + threads); ++r) {
            running.push_back(std::async(std::launch::async, [&config, r] { return run_replicate(config, r); }));
        }
        for (std::size_t j = 0; j < running.size(); ++j) results[static_cast<std::size_t>(start) + j] = running[j].get();
    }
    return results;
}

void write_mse_csv(std::ostream& out, const std::vector<ReplicateResult>& results) {
    out << "t,method,mse,replicate\n";
    for (const auto& r : results) {
        for (const auto& row : r.mse) {
            out << row.t << ',' << row.method << ',' << format_double(row.mse) << ',' << row.replicate << '\n';
        }
    }
}

void write_weight_summary_csv(std::ostream& out, const std::vector<ReplicateResult>& results) {
    out << "t,replicate,historical_mass,individual_mass\n";
    for (const auto& r : results) {
        for (const auto& row : r.weights) {
            out << row.t << ',' << row.replicate << ',' << format_double(row.historical_mass) << ','
                << format_double(row.individual_mass) << '\n';
        }
    }
}

}  // namespace posl
